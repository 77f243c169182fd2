from django.apps import AppConfig


class EnvolventesConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'envolventes'
    verbose_name = 'Envolventes de operación'
