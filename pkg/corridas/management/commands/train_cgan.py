from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Entrena el generador condicional de escenarios de residuos por canal."
    stage_name = "train_cgan"
