from django.apps import AppConfig


class RedConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'red'
    verbose_name = 'Red de distribución'
