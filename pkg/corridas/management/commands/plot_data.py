from corridas.services.plotdata import build_plot_data

from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Escribe los CSV con los datos de las figuras de una corrida completada (sin graficar)."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--prosumer",
            type=int,
            default=None,
            help="Prosumidor de las figuras de escenarios y gaussianas (por defecto, el primero).",
        )

    def handle(self, *args, **options):
        config = self.load_config(options)
        written = self.guarded(
            lambda: build_plot_data(config.output_dir, config.series_path, prosumer=options["prosumer"])
        )
        for name, path in written.items():
            self.stdout.write(f"{name}: {path}")
        self.stdout.write(self.style.SUCCESS("Datos de figuras generados."))
