from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Valida las envolventes por Monte Carlo sobre el flujo de potencia AC."
    stage_name = "validate"
