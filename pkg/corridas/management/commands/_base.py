"""Shared flags and error mapping of the pipeline commands."""

from django.core.management.base import BaseCommand, CommandError

from corridas.services.config import ConfigError, RunConfig
from corridas.services.stages import RunContext, StageError, run_stage

EXIT_CONFIG = 2
EXIT_STAGE = 3


class PipelineCommand(BaseCommand):
    stage_name = None

    def add_arguments(self, parser):
        parser.add_argument(
            "--config",
            default=None,
            help="Archivo KEY=VALUE con la configuración de la corrida (opcional).",
        )
        parser.add_argument(
            "--seed",
            type=int,
            default=None,
            help="Semilla de la corrida; tiene prioridad sobre SEED del archivo.",
        )
        parser.add_argument(
            "--out",
            default=None,
            help="Directorio de salida; tiene prioridad sobre OUTPUT_DIR.",
        )
        parser.add_argument(
            "--force",
            action="store_true",
            help="Ignora la caché de etapas y vuelve a ejecutar.",
        )

    def load_config(self, options) -> RunConfig:
        try:
            return RunConfig.from_file(options.get("config"), seed=options.get("seed"), out=options.get("out"))
        except ConfigError as exc:
            raise CommandError(f"Configuración inválida: {exc}", returncode=EXIT_CONFIG) from exc

    def guarded(self, action):
        try:
            return action()
        except ConfigError as exc:
            raise CommandError(f"Configuración inválida: {exc}", returncode=EXIT_CONFIG) from exc
        except StageError as exc:
            raise CommandError(str(exc), returncode=EXIT_STAGE) from exc

    def handle(self, *args, **options):
        config = self.load_config(options)
        context = RunContext(config=config)
        detail = self.guarded(lambda: run_stage(context, self.stage_name, force=options["force"]))
        status = context.statuses.get(self.stage_name, "ok")
        label = "reutilizada (caché)" if status == "cache" else f"completada en {context.timings[self.stage_name]:.2f} s"
        self.stdout.write(self.style.SUCCESS(f"Etapa {self.stage_name} {label}."))
        if detail:
            self.stdout.write(f"Detalle: {detail}")
