from unittest import mock

from django.db import DatabaseError
from django.test import TestCase

from .models import BitacoraEntry
from .utils import registrar_evento


class RegistrarEventoTests(TestCase):
    def test_creates_entry_with_detail(self):
        entry = registrar_evento("abc123", "split", "Partición T1/T2/T3", duracion_s=0.5, detalle={"t1": 365})
        self.assertIsNotNone(entry)
        stored = BitacoraEntry.objects.get(pk=entry.pk)
        self.assertEqual(stored.etapa, "split")
        self.assertEqual(stored.estado, BitacoraEntry.ESTADO_OK)
        self.assertEqual(stored.detalle, {"t1": 365})
        self.assertIn("abc123", str(stored))

    def test_entries_ordered_newest_first(self):
        registrar_evento("r", "split", "primero")
        registrar_evento("r", "fit_point", "segundo", estado=BitacoraEntry.ESTADO_CACHE)
        self.assertEqual(list(BitacoraEntry.objects.values_list("accion", flat=True))[0], "segundo")

    def test_database_failure_only_warns(self):
        with mock.patch.object(BitacoraEntry.objects, "create", side_effect=DatabaseError("sin tabla")):
            with self.assertLogs("bitacora.utils", level="WARNING"):
                self.assertIsNone(registrar_evento("r", "solve_envelopes", "falla"))
