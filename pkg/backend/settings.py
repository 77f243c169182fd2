"""
Django settings for the operating-envelope project.
"""

import os
from pathlib import Path
from dotenv import load_dotenv
from decouple import config

# BASE DIR
BASE_DIR = Path(__file__).resolve().parent.parent
load_dotenv(BASE_DIR / '.env')

SECRET_KEY = config('SECRET_KEY', default='django-insecure-envolventes-local-only')

DEBUG = config('DEBUG', default=True, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1').split(',')

# Apps
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'red',
    'pronostico',
    'escenarios',
    'metricas',
    'envolventes',
    'corridas',
    'bitacora',
]

# Database (solo guarda la bitácora de corridas)
DATABASES = {
    'default': {
        'ENGINE': config('DB_ENGINE', default='django.db.backends.sqlite3'),
        'NAME': config('DB_NAME', default=str(BASE_DIR / 'envolventes.sqlite3')),
    }
}

# Internationalization
LANGUAGE_CODE = 'es'
TIME_ZONE = 'UTC'
USE_I18N = True
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Logging
LOG_LEVEL = config('LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': LOG_LEVEL,
    },
    'loggers': {
        'cvxpy': {'level': 'WARNING'},
    },
}

# Red de distribución
ENVELOPES_NETWORK_PATH = config(
    'ENVELOPES_NETWORK_PATH',
    default=str(BASE_DIR / 'red' / 'data' / 'network25.json'),
)

# Salidas de las corridas
ENVELOPES_OUTPUT_DIR = config(
    'ENVELOPES_OUTPUT_DIR',
    default=os.path.join(BASE_DIR, 'runs'),
)

ENVELOPES_SEED = config('ENVELOPES_SEED', default=42, cast=int)

# Valores por defecto de la corrida (sobrescribibles con --config)
ENVELOPES_DEFAULTS = {
    'HORIZON_DAYS': config('ENVELOPES_HORIZON_DAYS', default='1'),
    'SCENARIOS': config('ENVELOPES_SCENARIOS', default=1000, cast=int),
    'XI_V': config('ENVELOPES_XI_V', default=0.05, cast=float),
    'XI_L': config('ENVELOPES_XI_L', default=0.05, cast=float),
    'XI_P': config('ENVELOPES_XI_P', default=0.05, cast=float),
    'NOISE_DIM': config('ENVELOPES_NOISE_DIM', default=512, cast=int),
    'ITERATIONS': config('ENVELOPES_ITERATIONS', default=20000, cast=int),
    'CRITIC_STEPS': 5,
    'BATCH_SIZE': 32,
    'GP_WEIGHT': 10.0,
    'GAN_MODE': 'wgan_gp',
    'CLIP_BOUND': 0.01,
    'LEARNING_RATE': 1e-4,
    'LOG_EVERY': 500,
    'RIDGE_ALPHA': 1e-2,
    'EXPORT_CAP_KW': 10.0,
    'DELTA_T_H': 0.5,
    'LOSS_WEIGHT': 1e-3,
    'FILL_WEIGHT': 0.0,
    'TERMINAL_SOC': 0.0,
    'MC_DRAWS': config('ENVELOPES_MC_DRAWS', default=10000, cast=int),
    'BINARY_STRATEGY': 'round',
    'SOLVER': config('ENVELOPES_SOLVER', default='CLARABEL'),
    # Tarifa horaria: tramos "hora_inicio-hora_fin:c/kWh"
    'TOU_TARIFF': '0-7:15.96,7-15:25.96,15-21:57.76,21-22:25.96,22-24:15.96',
    'FIT_TARIFF': 9.0,
}
