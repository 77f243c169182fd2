from django.apps import AppConfig


class CorridasConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'corridas'
    verbose_name = 'Corridas del pipeline'
