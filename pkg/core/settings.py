"""
Django settings for the contact-network project.

There is no web surface and no database: the project is driven through
management commands (see ``core/cli.py``). Values below can be overridden
from the environment or a ``.env`` file.
"""
import os
from pathlib import Path
import dotenv
dotenv.load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: only meaningful if a web surface is ever added
SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'django-insecure-contactnet-development-only')

DEBUG = os.environ.get('DJANGO_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'beacons',
    'contacts',
    'networks',
    'epidemics',
]

MIDDLEWARE = []

# All data lives in packet/event/graph files
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Analysis defaults

# width of one analysis window in seconds
CONTACTNET_BIN_WIDTH = float(os.environ.get('CONTACTNET_BIN_WIDTH', 20))

# packets per window for a "strong" contact
CONTACTNET_STRONG_THRESHOLD = int(os.environ.get('CONTACTNET_STRONG_THRESHOLD', 5))

# per-packet transmission coefficient for the SI emulation
CONTACTNET_DEFAULT_BETA = float(os.environ.get('CONTACTNET_DEFAULT_BETA', 0.01))

CONTACTNET_SEED = int(os.environ.get('CONTACTNET_SEED', 0))

CONTACTNET_LOG_LEVEL = os.environ.get('CONTACTNET_LOG_LEVEL', 'INFO')


LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'plain',
        },
    },
    'loggers': {
        name: {
            'handlers': ['console'],
            'level': CONTACTNET_LOG_LEVEL,
            'propagate': False,
        }
        for name in ('core', 'beacons', 'contacts', 'networks', 'epidemics')
    },
}
