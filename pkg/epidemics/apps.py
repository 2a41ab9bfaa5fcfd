from django.apps import AppConfig


class EpidemicsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'epidemics'
