from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Ajusta el modelo de pronóstico puntual por canal con los días T1."
    stage_name = "fit_point"
