from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Resuelve el flujo óptimo con restricciones de probabilidad y extrae las envolventes."
    stage_name = "solve_envelopes"
