"""
Django settings for the spectrum project.

The project has no database and no HTTP surface: Django hosts the
experiment commands (``manage.py run_experiment`` / ``validate_config``),
the settings below and the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

from pathlib import Path
import environ
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# load .env
env = environ.Env(
    DEBUG=(bool, False),
    SPECTRUM_SLOW_TESTS=(bool, False),
)
env.read_env(os.path.join(BASE_DIR, '.env'))

SECRET_KEY = env('SECRET_KEY', default='spectrum-dev-key-not-for-deployment')
DEBUG = env('DEBUG')
ALLOWED_HOSTS = env.list('ALLOWED_HOSTS', default=[])


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'bandits',
]

# No experiment database; simulations keep everything in memory and on disk.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Experiment runner

# Default --out directory of run_experiment.
SPECTRUM_OUTPUT_DIR = Path(env('SPECTRUM_OUTPUT_DIR', default=str(BASE_DIR / 'results')))

# Shipped experiment presets, addressable by file stem (e.g. "paper-stochastic").
SPECTRUM_PRESET_DIR = BASE_DIR / 'bandits' / 'presets'

# Acceptance-scale Monte-Carlo tests (minutes each) are opt-in.
SPECTRUM_SLOW_TESTS = env('SPECTRUM_SLOW_TESTS')

SPECTRUM_LOG_LEVEL = env('SPECTRUM_LOG_LEVEL', default='DEBUG' if DEBUG else 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'bandits': {
            'handlers': ['console'],
            'level': SPECTRUM_LOG_LEVEL,
            'propagate': False,
        },
    },
}
