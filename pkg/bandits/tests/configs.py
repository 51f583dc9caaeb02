"""Small experiment files shared by the engine, config and command tests."""

STOCHASTIC = '''
[environment]
M = 3
users = 4
variance = 0.01
means = [
    [1.00, 0.49, 0.10],
    [0.98, 0.42, 0.13],
    [0.97, 0.50, 0.12],
]

[algorithm]
scenario = "stochastic"
T0 = 150
Tx = 40
N0 = 2
Tf_bound = 60
estimation_snapshot_every = 50

[run]
cycling_rounds = 200
trials = 2
seed = 3
checkpoint_every = 50
'''

ADVERSARIAL = '''
[environment]
M = 4
users = 3

[algorithm]
scenario = "adversarial"

[run]
horizon = 400
trials = 3
seed = 5
checkpoint_every = 20
'''

DOUBLING = '''
[environment]
M = 3
users = 2

[algorithm]
scenario = "doubling"
tau = 8

[run]
horizon = 500
trials = 2
seed = 1
'''

DYNAMIC_STOCHASTIC = '''
[environment]
M = 4
users = 2
means = [
    [0.9, 0.2],
    [0.8, 0.2],
    [0.7, 0.1],
    [0.6, 0.1],
]
arrival_zeta = 0.3

[algorithm]
scenario = "dynamic-stochastic"
T0 = 200
Tx = 50
N0 = 2
Tf_bound = 50
tau = 600

[run]
horizon = 3000
trials = 1
seed = 2
checkpoint_every = 100
'''

DYNAMIC_ADVERSARIAL = '''
[environment]
M = 4
users = 2
events = [[300, "join", 2], [700, "leave", 0]]

[algorithm]
scenario = "dynamic-adversarial"
tau = 16

[run]
horizon = 1000
trials = 1
seed = 4
checkpoint_every = 50
'''

# one exploration round leaves a channel unobserved
INCOMPLETE_ESTIMATE = '''
[environment]
M = 2
users = 1
means = [[0.9, 0.1], [0.8, 0.1]]

[algorithm]
scenario = "stochastic"
T0 = 1
Tc = 0
Tx = 1
N0 = 2

[run]
cycling_rounds = 5
'''

# f* = (2, 2): every fixing epoch ends with two users per channel
FLAT_CYCLING = '''
[environment]
M = 2
users = 4
means = [[0.9, 0.5, 0.1], [0.8, 0.45, 0.05]]

[algorithm]
scenario = "stochastic"
T0 = 40
Tc = 0
Tx = 20
N0 = 2
Tf_bound = 100
known_parameters = true

[run]
cycling_rounds = 400
trials = 2
seed = 11
checkpoint_every = 20
'''

# the same channels with estimated parameters, small enough to run on every test pass
REDUCED_STOCHASTIC = '''
[environment]
M = 2
users = 4
variance = 0.001
means = [[0.9, 0.5, 0.1], [0.8, 0.45, 0.05]]

[algorithm]
scenario = "stochastic"
T0 = 1000
Tc = 1000
Tx = 20
N0 = 2
Tf_bound = 100

[run]
cycling_rounds = 400
trials = 20
seed = 8
checkpoint_every = 20
'''
