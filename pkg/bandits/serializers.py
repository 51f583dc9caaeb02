from rest_framework import serializers

from .env import AdversaryKind, DistKind, EventKind
from .experiment import DYNAMIC, DYNAMIC_STOCHASTIC, SCENARIOS, STOCHASTIC_FAMILY


class EnvironmentSerializer(serializers.Serializer):
    M = serializers.IntegerField(min_value=1)
    users = serializers.IntegerField(min_value=1)
    beta = serializers.IntegerField(min_value=1, required=False)
    means = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(min_value=0.0, max_value=1.0), min_length=2),
        required=False,
    )
    variance = serializers.FloatField(min_value=0.0, default=0.0)
    dist_kind = serializers.ChoiceField(choices=[k.value for k in DistKind], default=DistKind.UNIFORM.value)
    separability_c = serializers.FloatField(min_value=0.0, default=16.0)
    separability_epsilon2 = serializers.FloatField(min_value=0.0, default=0.01)
    adversary = serializers.ChoiceField(
        choices=[k.value for k in AdversaryKind], default=AdversaryKind.IID_UNIFORM_FLOOR.value,
    )
    floor_low = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.2)
    floor_high = serializers.FloatField(min_value=0.0, max_value=1.0, default=1.0)
    rewards_csv = serializers.CharField(required=False)
    events = serializers.ListField(child=serializers.ListField(), required=False, default=list)
    arrival_zeta = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)

    def validate_means(self, value):
        widths = {len(row) for row in value}
        if len(widths) > 1:
            raise serializers.ValidationError('every row of means needs the same number of occupancies.')
        return value

    def validate_events(self, value):
        events = []
        kinds = [k.value for k in EventKind]
        for item in value:
            if len(item) != 3 or not isinstance(item[0], int) or item[1] not in kinds or not isinstance(item[2], int):
                raise serializers.ValidationError(f'event {item!r} is not [time, "join"|"leave", user].')
            events.append((item[0], item[1], item[2]))
        return events

    def validate(self, data):
        if data['floor_low'] > data['floor_high']:
            raise serializers.ValidationError({'floor_low': 'floor_low must not exceed floor_high.'})
        if data.get('events') and 'arrival_zeta' in data:
            raise serializers.ValidationError({'arrival_zeta': 'give either events or arrival_zeta, not both.'})
        if 'means' in data:
            if len(data['means']) != data['M']:
                raise serializers.ValidationError({'means': f'expected {data["M"]} rows (one per channel).'})
            width = len(data['means'][0])
            if data.setdefault('beta', width - 1) != width - 1:
                raise serializers.ValidationError({'beta': f'means has {width} columns, so beta must be {width - 1}.'})
        return data


class AlgorithmSerializer(serializers.Serializer):
    scenario = serializers.ChoiceField(choices=SCENARIOS)
    T0 = serializers.IntegerField(min_value=1, required=False)
    Tx = serializers.IntegerField(min_value=1, required=False)
    N0 = serializers.IntegerField(min_value=2, required=False)
    Tc = serializers.IntegerField(min_value=0, required=False)
    Tf_bound = serializers.IntegerField(min_value=1, required=False)
    epsilon = serializers.FloatField(min_value=0.0, default=0.05)
    delta = serializers.FloatField(default=0.05)
    restarts = serializers.IntegerField(min_value=1, default=10)
    max_iters = serializers.IntegerField(min_value=1, default=100)
    known_parameters = serializers.BooleanField(default=False)
    estimation_snapshot_every = serializers.IntegerField(min_value=1, required=False)
    y = serializers.FloatField(default=0.5)
    tau = serializers.IntegerField(min_value=4, required=False)

    def validate_delta(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError('delta must lie strictly between 0 and 1.')
        return value

    def validate_y(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError('y must lie strictly between 0 and 1.')
        return value

    def validate(self, data):
        if data['scenario'] in STOCHASTIC_FAMILY:
            missing = {key: 'required for stochastic scenarios.' for key in ('T0', 'Tx', 'N0') if key not in data}
            if missing:
                raise serializers.ValidationError(missing)
        if data['scenario'] == DYNAMIC_STOCHASTIC and 'tau' not in data:
            raise serializers.ValidationError({'tau': 'required for dynamic-stochastic runs.'})
        return data


class RunSerializer(serializers.Serializer):
    horizon = serializers.IntegerField(min_value=1, required=False)
    cycling_rounds = serializers.IntegerField(min_value=0, default=50000)
    trials = serializers.IntegerField(min_value=1, default=1)
    seed = serializers.IntegerField(min_value=0, default=0)
    checkpoint_every = serializers.IntegerField(min_value=1, required=False)


class ExperimentSerializer(serializers.Serializer):
    environment = EnvironmentSerializer()
    algorithm = AlgorithmSerializer()
    run = RunSerializer()

    def validate(self, data):
        env, algo, run = data['environment'], data['algorithm'], data['run']
        scenario, K, M = algo['scenario'], env['users'], env['M']
        if scenario in STOCHASTIC_FAMILY:
            if 'means' not in env:
                raise serializers.ValidationError({'environment': {'means': 'required for stochastic scenarios.'}})
            if M < 2:
                raise serializers.ValidationError({'environment': {'M': 'stochastic scenarios need M >= 2.'}})
            if K > env['beta'] * M:
                raise serializers.ValidationError(
                    {'environment': {'users': f'{K} users exceed beta*M = {env["beta"] * M}.'}}
                )
            if algo['N0'] > M:
                raise serializers.ValidationError({'algorithm': {'N0': f'N0 must not exceed M = {M}.'}})
        else:
            if M < 2:
                raise serializers.ValidationError({'environment': {'M': 'adversarial scenarios need M >= 2.'}})
            if K > M:
                raise serializers.ValidationError({'environment': {'users': f'{K} users exceed M = {M} channels.'}})
            if 'horizon' not in run:
                raise serializers.ValidationError({'run': {'horizon': 'required for adversarial scenarios.'}})
            if run['horizon'] < 4:
                raise serializers.ValidationError({'run': {'horizon': 'adversarial runs need at least 4 rounds.'}})
            if env['adversary'] == AdversaryKind.SCRIPTED.value and 'rewards_csv' not in env:
                raise serializers.ValidationError({'environment': {'rewards_csv': 'required by a scripted adversary.'}})
        if scenario in DYNAMIC and 'horizon' not in run:
            raise serializers.ValidationError({'run': {'horizon': 'required for dynamic scenarios.'}})
        if scenario not in DYNAMIC and (env.get('events') or 'arrival_zeta' in env):
            raise serializers.ValidationError(
                {'environment': {'events': f'user events need a dynamic scenario, not {scenario}.'}}
            )
        return data
