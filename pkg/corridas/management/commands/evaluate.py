from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Evalúa CRPS y pérdida pinball de los escenarios en los días de prueba."
    stage_name = "evaluate"
