from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Calcula los residuos del pronóstico puntual en los días T2."
    stage_name = "residuals"
