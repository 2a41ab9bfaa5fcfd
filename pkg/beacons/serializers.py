import re
from pathlib import Path

import yaml
from rest_framework import serializers

from core.exceptions import ConfigurationError
from .simulation import DEFAULT_OCCUPANCY, DEFAULT_ROOMS, DEFAULT_SCHEDULE, DEFAULT_START_PROB, PHASE_KINDS, ScenarioConfig

CLOCK = re.compile(r'^(?P<hours>\d{1,2}):(?P<minutes>\d{2})(?::(?P<seconds>\d{2}))?$')


class ClockField(serializers.Field):
    """Seconds from the start of the day, given as a number or ``"HH:MM[:SS]"``."""

    default_error_messages = {
        'invalid': 'Expected seconds or an HH:MM time, got {value!r}.',
    }

    def to_internal_value(self, data):
        if isinstance(data, bool):
            self.fail('invalid', value=data)
        if isinstance(data, (int, float)):
            return float(data)
        match = CLOCK.match(str(data).strip())
        if not match:
            self.fail('invalid', value=data)
        hours, minutes = int(match['hours']), int(match['minutes'])
        seconds = int(match['seconds'] or 0)
        if minutes >= 60 or seconds >= 60 or hours > 24:
            self.fail('invalid', value=data)
        return float(hours * 3600 + minutes * 60 + seconds)

    def to_representation(self, value):
        return value


class RoomSerializer(serializers.Serializer):
    station = serializers.IntegerField(min_value=0)
    name = serializers.CharField(max_length=64)


class PhaseSerializer(serializers.Serializer):
    start = ClockField()
    end = ClockField()
    kind = serializers.ChoiceField(choices=PHASE_KINDS)

    def validate(self, attrs):
        if attrs['start'] >= attrs['end']:
            raise serializers.ValidationError('phase must end after it starts')
        return attrs


class ScenarioConfigSerializer(serializers.Serializer):
    n_agents = serializers.IntegerField(min_value=0, default=50)
    days = serializers.IntegerField(min_value=0, default=4)
    rooms = RoomSerializer(many=True, required=False)
    schedule = PhaseSerializer(many=True, required=False)
    occupancy = serializers.DictField(
        child=serializers.DictField(child=serializers.FloatField(min_value=0, max_value=1)),
        required=False,
    )
    duration_exponent = serializers.FloatField(default=2.0)
    min_duration = serializers.IntegerField(min_value=1, default=1)
    max_duration = serializers.IntegerField(min_value=1, default=90)
    group_size_weights = serializers.ListField(
        child=serializers.FloatField(min_value=0, max_value=1), min_length=3, max_length=3,
        default=[0.6, 0.3, 0.1],
    )
    contact_start_prob = serializers.DictField(
        child=serializers.FloatField(min_value=0, max_value=1), required=False,
    )
    packets_per_bin_mean = serializers.FloatField(default=8.0)
    packet_loss_prob = serializers.FloatField(min_value=0, max_value=1, default=0.1)
    sightings_per_bin_mean = serializers.FloatField(min_value=0, default=3.0)
    bin_width = serializers.FloatField(default=20.0)
    beacon_id_base = serializers.IntegerField(min_value=0, default=4500)
    rng_seed = serializers.IntegerField(default=0)

    def validate_duration_exponent(self, value):
        if value <= 1:
            raise serializers.ValidationError('must exceed 1')
        return value

    def validate_packets_per_bin_mean(self, value):
        if value <= 0:
            raise serializers.ValidationError('must be positive')
        return value

    def validate_contact_start_prob(self, value):
        unknown = set(value) - set(PHASE_KINDS)
        if unknown:
            raise serializers.ValidationError(f'unknown phase kind(s): {sorted(unknown)}')
        return value

    def validate(self, attrs):
        if attrs['max_duration'] < attrs['min_duration']:
            raise serializers.ValidationError({'max_duration': 'must be at least min_duration'})
        if abs(sum(attrs['group_size_weights']) - 1) > 1e-9:
            raise serializers.ValidationError({'group_size_weights': 'must sum to 1'})
        return attrs

    def to_config(self):
        """Build the ``ScenarioConfig``; call after ``is_valid()``."""
        data = dict(self.validated_data)
        rooms = data.pop('rooms', None)
        schedule = data.pop('schedule', None)
        occupancy = data.pop('occupancy', None)
        start_prob = data.pop('contact_start_prob', None)

        data['rooms'] = tuple((r['station'], r['name']) for r in rooms) if rooms else DEFAULT_ROOMS
        data['schedule'] = tuple((p['start'], p['end'], p['kind']) for p in schedule) if schedule else DEFAULT_SCHEDULE
        data['occupancy'] = {k: dict(v) for k, v in (occupancy or DEFAULT_OCCUPANCY).items()}
        data['contact_start_prob'] = {**DEFAULT_START_PROB, **(start_prob or {})}
        data['group_size_weights'] = tuple(data['group_size_weights'])
        return ScenarioConfig(**data)


def _flatten_errors(errors, prefix=''):
    if isinstance(errors, dict):
        for key, value in errors.items():
            yield from _flatten_errors(value, f'{prefix}{key}.')
    elif isinstance(errors, list):
        for i, value in enumerate(errors):
            if isinstance(value, (dict, list)):
                yield from _flatten_errors(value, f'{prefix}{i}.')
            else:
                yield f'{prefix.rstrip(".")}: {value}'
    else:
        yield f'{prefix.rstrip(".")}: {errors}'


def scenario_from_mapping(data):
    serializer = ScenarioConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigurationError('invalid scenario: ' + '; '.join(_flatten_errors(serializer.errors)))
    return serializer.to_config()


def load_config_file(path):
    """Read a key/value config file (YAML, or TOML for ``.toml``) to a dict."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
        if path.suffix.lower() == '.toml':
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            data = tomllib.loads(text)
        else:
            data = yaml.safe_load(text)
    except (yaml.YAMLError, ValueError) as exc:
        # ValueError covers TOML syntax and undecodable bytes
        raise ConfigurationError(f'{path}: cannot parse config: {exc}') from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f'{path}: config must be a key/value mapping')
    return data


def scenario_fields():
    return set(ScenarioConfigSerializer().fields)
