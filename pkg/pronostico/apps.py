from django.apps import AppConfig


class PronosticoConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'pronostico'
    verbose_name = 'Pronóstico puntual'
