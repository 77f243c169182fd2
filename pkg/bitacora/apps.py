from django.apps import AppConfig


class BitacoraConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'bitacora'
    verbose_name = 'Bitácora de corridas'
