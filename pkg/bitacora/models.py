from django.db import models


class BitacoraEntry(models.Model):
    ESTADO_INICIO = "INICIO"
    ESTADO_OK = "OK"
    ESTADO_CACHE = "CACHE"
    ESTADO_ERROR = "ERROR"
    ESTADOS = [
        (ESTADO_INICIO, "Inicio"),
        (ESTADO_OK, "Completada"),
        (ESTADO_CACHE, "Reutilizada"),
        (ESTADO_ERROR, "Error"),
    ]

    corrida = models.CharField(max_length=64, db_index=True)
    etapa = models.CharField(max_length=50)
    accion = models.CharField(max_length=255)
    estado = models.CharField(max_length=10, choices=ESTADOS, default=ESTADO_OK)
    duracion_s = models.FloatField(default=0.0)
    detalle = models.JSONField(blank=True, null=True)
    creado_en = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-creado_en"]
        verbose_name = "Bitacora"
        verbose_name_plural = "Bitacora"

    def __str__(self):
        return f"{self.etapa}: {self.accion} ({self.estado}) en {self.corrida}"
