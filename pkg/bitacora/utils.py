from __future__ import annotations

import logging
from typing import Any, Dict, Optional

from django.db import DatabaseError

from .models import BitacoraEntry

logger = logging.getLogger(__name__)


def registrar_evento(
    corrida: str,
    etapa: str,
    accion: str,
    *,
    estado: str = BitacoraEntry.ESTADO_OK,
    duracion_s: float = 0.0,
    detalle: Optional[Dict[str, Any]] = None,
) -> Optional[BitacoraEntry]:
    """
    Guarda una entrada en la bitácora de la corrida.

    Si la tabla no existe (migraciones sin aplicar) solo se registra una
    advertencia y se devuelve None.
    """

    try:
        return BitacoraEntry.objects.create(
            corrida=corrida,
            etapa=etapa,
            accion=accion,
            estado=estado,
            duracion_s=duracion_s,
            detalle=detalle,
        )
    except DatabaseError as exc:
        logger.warning("No se pudo registrar el evento '%s' de la etapa %s: %s", accion, etapa, exc)
        return None
