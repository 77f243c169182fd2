from corridas.services.pipeline import run_pipeline
from corridas.services.stages import RunContext

from ._base import PipelineCommand


class Command(PipelineCommand):
    help = (
        "Ejecuta la corrida completa: partición, pronóstico puntual, residuos, CGAN, escenarios, "
        "ajuste gaussiano, envolventes, validación Monte Carlo y evaluación."
    )

    def handle(self, *args, **options):
        config = self.load_config(options)
        context = RunContext(config=config)
        manifest = self.guarded(lambda: run_pipeline(config, force=options["force"], context=context))

        for stage, status in manifest.stages.items():
            self.stdout.write(f"{stage}: {status} ({manifest.timings.get(stage, 0.0):.2f} s)")
        self.stdout.write(f"Hash de configuración: {manifest.config_hash}")
        self.stdout.write(self.style.SUCCESS(f"Corrida completada; manifiesto en {config.output_dir / 'manifest.json'}."))
