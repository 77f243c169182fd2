from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Genera escenarios de residuos para los días del horizonte."
    stage_name = "sample"
