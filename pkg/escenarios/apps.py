from django.apps import AppConfig


class EscenariosConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'escenarios'
    verbose_name = 'Escenarios CGAN'
