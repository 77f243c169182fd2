from datetime import date

from django.core.management.base import CommandError

from corridas.services.stages import generate_series
from pronostico.services.synthetic import DEFAULT_START, DEFAULT_YEARS

from ._base import EXIT_CONFIG, PipelineCommand


class Command(PipelineCommand):
    help = "Genera una serie sintética de demanda y generación FV compatible con el esquema de entrada."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--years",
            type=int,
            default=DEFAULT_YEARS,
            help=f"Años a generar (mínimo 2, por defecto {DEFAULT_YEARS}).",
        )
        parser.add_argument(
            "--prosumers",
            type=int,
            default=None,
            help="Cantidad de prosumidores (por defecto, los de la red configurada).",
        )
        parser.add_argument(
            "--start",
            default=DEFAULT_START.isoformat(),
            help=f"Primer día de la serie en formato ISO (por defecto {DEFAULT_START.isoformat()}).",
        )

    def handle(self, *args, **options):
        config = self.load_config(options)
        if options["years"] < 2:
            raise CommandError("El parámetro --years debe ser al menos 2.", returncode=EXIT_CONFIG)
        try:
            start = date.fromisoformat(options["start"])
        except ValueError as exc:
            raise CommandError(f"--start inválido: {exc}", returncode=EXIT_CONFIG) from exc

        try:
            path = generate_series(config, years=options["years"], prosumers=options["prosumers"], start=start)
        except ValueError as exc:
            raise CommandError(str(exc), returncode=EXIT_CONFIG) from exc
        self.stdout.write(self.style.SUCCESS(f"Serie sintética escrita en {path}."))
