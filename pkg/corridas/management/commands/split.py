from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Divide la serie en entrenamiento (T1), entrenamiento adversarial (T2) y prueba (T3)."
    stage_name = "split"
