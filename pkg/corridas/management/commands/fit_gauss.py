from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Ajusta medias y desviaciones gaussianas por intervalo a partir de los escenarios."
    stage_name = "fit_gauss"
