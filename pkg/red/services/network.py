import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, IO, List, Mapping, Optional, Tuple, Union

logger = logging.getLogger(__name__)

DEFAULT_ETA = 0.95
DEFAULT_POWER_FACTOR = 0.9


class NetworkFormatError(ValueError):
    """Raised when a network document does not follow the documented schema."""

    def __init__(self, field_path: str, message: str, line: Optional[int] = None):
        self.field_path = field_path
        self.line = line
        location = f" (línea {line})" if line is not None else ""
        super().__init__(f"Campo '{field_path}'{location}: {message}")


@dataclass(frozen=True)
class ProsumerAssets:
    """PV and battery ratings of the prosumer attached to a bus, in kW / kWh."""

    pv_cap: float
    batt_p_min: float
    batt_p_max: float
    soc_min: float
    soc_max: float
    soc_init: float
    eta: float = DEFAULT_ETA
    power_factor: float = DEFAULT_POWER_FACTOR

    @property
    def kappa(self) -> float:
        """Reactive-to-active ratio tan(arccos(pf))."""
        return math.tan(math.acos(self.power_factor))

    @property
    def has_battery(self) -> bool:
        return self.batt_p_max > 0 or self.batt_p_min < 0


@dataclass(frozen=True)
class Bus:
    id: int
    v_min: float
    v_max: float
    prosumer: Optional[ProsumerAssets] = None
    slack: bool = False


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float
    s_max: float

    @property
    def z_squared(self) -> float:
        return self.r**2 + self.x**2


@dataclass(frozen=True)
class Network:
    buses: Tuple[Bus, ...]
    lines: Tuple[Line, ...]
    slack_v: float
    base_mva: float
    base_kv: float
    name: str = ""

    @property
    def z_base(self) -> float:
        return self.base_kv**2 / self.base_mva

    @property
    def bus_ids(self) -> List[int]:
        return [bus.id for bus in self.buses]

    @property
    def slack_candidates(self) -> List[int]:
        flagged = [bus.id for bus in self.buses if bus.slack]
        if flagged:
            return flagged
        return [bus.id for bus in self.buses if bus.id == 0]

    @property
    def slack_bus(self) -> int:
        candidates = self.slack_candidates
        if len(candidates) != 1:
            raise ValueError(f"La red debe tener exactamente una barra slack (encontradas: {candidates}).")
        return candidates[0]

    def index_of(self, bus_id: int) -> int:
        for index, bus in enumerate(self.buses):
            if bus.id == bus_id:
                return index
        raise KeyError(bus_id)

    @property
    def prosumer_buses(self) -> List[int]:
        return [bus.id for bus in self.buses if bus.prosumer is not None]

    def kw_to_pu(self, value):
        return value / (self.base_mva * 1000.0)

    def pu_to_kw(self, value):
        return value * self.base_mva * 1000.0


# ---------------------------------------------------------------------------
# Ingesta
# ---------------------------------------------------------------------------


def _require(document: Mapping[str, Any], key: str, path: str) -> Any:
    if not isinstance(document, Mapping):
        raise NetworkFormatError(path, "se esperaba un objeto JSON.")
    if key not in document:
        raise NetworkFormatError(f"{path}.{key}" if path else key, "campo obligatorio ausente.")
    return document[key]


def _number(document: Mapping[str, Any], key: str, path: str, default: Optional[float] = None) -> float:
    if default is not None and key not in document:
        return float(default)
    raw = _require(document, key, path)
    full = f"{path}.{key}" if path else key
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise NetworkFormatError(full, f"se esperaba un número, se recibió {raw!r}.")
    value = float(raw)
    if not math.isfinite(value):
        raise NetworkFormatError(full, "el valor debe ser finito.")
    return value


def _integer(document: Mapping[str, Any], key: str, path: str) -> int:
    raw = _require(document, key, path)
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise NetworkFormatError(f"{path}.{key}", f"se esperaba un entero, se recibió {raw!r}.")
    return raw


def _pct_to_squared(pct: float) -> float:
    return (pct / 100.0) ** 2


def _parse_prosumer(document: Mapping[str, Any], path: str) -> ProsumerAssets:
    assets = ProsumerAssets(
        pv_cap=_number(document, "pv_cap_kw", path),
        batt_p_max=_number(document, "batt_p_max_kw", path),
        batt_p_min=_number(document, "batt_p_min_kw", path),
        soc_min=_number(document, "soc_min_kwh", path),
        soc_max=_number(document, "soc_max_kwh", path),
        soc_init=_number(document, "soc_init_kwh", path),
        eta=_number(document, "eta", path, default=DEFAULT_ETA),
        power_factor=_number(document, "power_factor", path, default=DEFAULT_POWER_FACTOR),
    )
    if assets.pv_cap < 0:
        raise NetworkFormatError(f"{path}.pv_cap_kw", "la capacidad PV no puede ser negativa.")
    if not assets.batt_p_min <= 0 <= assets.batt_p_max:
        raise NetworkFormatError(f"{path}.batt_p_min_kw", "se requiere batt_p_min <= 0 <= batt_p_max.")
    if not assets.soc_min <= assets.soc_init <= assets.soc_max:
        raise NetworkFormatError(f"{path}.soc_init_kwh", "se requiere soc_min <= soc_init <= soc_max.")
    if not 0 < assets.eta <= 1:
        raise NetworkFormatError(f"{path}.eta", "la eficiencia debe estar en (0, 1].")
    if not 0 < assets.power_factor <= 1:
        raise NetworkFormatError(f"{path}.power_factor", "el factor de potencia debe estar en (0, 1].")
    return assets


def _parse_bus(document: Mapping[str, Any], path: str) -> Bus:
    v_min = _pct_to_squared(_number(document, "v_min_pct", path))
    v_max = _pct_to_squared(_number(document, "v_max_pct", path))
    if not 0 < v_min < v_max:
        raise NetworkFormatError(f"{path}.v_min_pct", "se requiere 0 < v_min_pct < v_max_pct.")
    prosumer = None
    if document.get("prosumer") is not None:
        prosumer = _parse_prosumer(document["prosumer"], f"{path}.prosumer")
    slack = document.get("slack", False)
    if not isinstance(slack, bool):
        raise NetworkFormatError(f"{path}.slack", "se esperaba true/false.")
    return Bus(id=_integer(document, "id", path), v_min=v_min, v_max=v_max, prosumer=prosumer, slack=slack)


def _parse_line(document: Mapping[str, Any], path: str, z_base: float, base_kva: float) -> Line:
    r_ohm = _number(document, "r_ohm", path)
    x_ohm = _number(document, "x_ohm", path)
    s_max_kva = _number(document, "s_max_kva", path)
    if r_ohm < 0:
        raise NetworkFormatError(f"{path}.r_ohm", "la resistencia no puede ser negativa.")
    if x_ohm < 0:
        raise NetworkFormatError(f"{path}.x_ohm", "la reactancia no puede ser negativa.")
    if s_max_kva <= 0:
        raise NetworkFormatError(f"{path}.s_max_kva", "el límite térmico debe ser positivo.")
    return Line(
        from_bus=_integer(document, "from", path),
        to_bus=_integer(document, "to", path),
        r=r_ohm / z_base,
        x=x_ohm / z_base,
        s_max=s_max_kva / base_kva,
    )


def network_from_dict(document: Mapping[str, Any]) -> Network:
    """Builds a per-unit Network from an already decoded network document."""
    if not isinstance(document, Mapping):
        raise NetworkFormatError("$", "el documento debe ser un objeto JSON.")

    base_mva = _number(document, "base_mva", "")
    base_kv = _number(document, "base_kv", "")
    if base_mva <= 0:
        raise NetworkFormatError("base_mva", "la base de potencia debe ser positiva.")
    if base_kv <= 0:
        raise NetworkFormatError("base_kv", "la base de tensión debe ser positiva.")
    slack_magnitude = _number(document, "slack_v", "")
    if slack_magnitude <= 0:
        raise NetworkFormatError("slack_v", "la tensión de la fuente debe ser positiva.")

    raw_buses = _require(document, "buses", "")
    raw_lines = _require(document, "lines", "")
    if not isinstance(raw_buses, list) or not raw_buses:
        raise NetworkFormatError("buses", "se esperaba una lista no vacía.")
    if not isinstance(raw_lines, list):
        raise NetworkFormatError("lines", "se esperaba una lista.")

    buses = tuple(_parse_bus(item, f"buses[{index}]") for index, item in enumerate(raw_buses))
    seen = set()
    for index, bus in enumerate(buses):
        if bus.id in seen:
            raise NetworkFormatError(f"buses[{index}].id", f"identificador de barra duplicado {bus.id}.")
        seen.add(bus.id)

    z_base = base_kv**2 / base_mva
    lines = tuple(
        _parse_line(item, f"lines[{index}]", z_base, base_mva * 1000.0) for index, item in enumerate(raw_lines)
    )
    for index, line in enumerate(lines):
        for key, bus_id in (("from", line.from_bus), ("to", line.to_bus)):
            if bus_id not in seen:
                raise NetworkFormatError(f"lines[{index}].{key}", f"la barra {bus_id} no existe.")

    name = document.get("name", "")
    return Network(
        buses=buses,
        lines=lines,
        slack_v=slack_magnitude**2,
        base_mva=base_mva,
        base_kv=base_kv,
        name=str(name),
    )


def ingest_network(source: Union[str, Path, IO[str], Mapping[str, Any]]) -> Network:
    """
    Reads a network document and converts it to per unit on (base_mva, base_kv).

    ``source`` may be a path, an open text file or an already decoded mapping.
    Voltage bounds are given in percent of nominal and stored squared.
    """

    if isinstance(source, Mapping):
        return network_from_dict(source)

    try:
        if isinstance(source, (str, Path)):
            text = Path(source).read_text(encoding="utf-8")
        else:
            text = source.read()
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError("$", f"JSON inválido: {exc.msg}.", line=exc.lineno) from exc
    except OSError as exc:
        raise NetworkFormatError("$", f"no se pudo leer el archivo: {exc}.") from exc

    network = network_from_dict(document)
    logger.debug(
        "Red '%s' cargada: %s barras, %s líneas, %s prosumidores",
        network.name,
        len(network.buses),
        len(network.lines),
        len(network.prosumer_buses),
    )
    return network


# ---------------------------------------------------------------------------
# Serialización
# ---------------------------------------------------------------------------


def _clean(value: float, digits: int = 12) -> float:
    return round(float(value), digits)


def _squared_to_pct(value: float) -> float:
    return _clean(math.sqrt(value) * 100.0, 10)


def serialize_network(network: Network) -> Dict[str, Any]:
    """Inverse of ``network_from_dict`` (physical units, percent voltage bounds)."""
    z_base = network.z_base
    base_kva = network.base_mva * 1000.0
    buses: List[Dict[str, Any]] = []
    for bus in network.buses:
        item: Dict[str, Any] = {
            "id": bus.id,
            "v_min_pct": _squared_to_pct(bus.v_min),
            "v_max_pct": _squared_to_pct(bus.v_max),
        }
        if bus.slack:
            item["slack"] = True
        if bus.prosumer is not None:
            assets = bus.prosumer
            item["prosumer"] = {
                "pv_cap_kw": assets.pv_cap,
                "batt_p_max_kw": assets.batt_p_max,
                "batt_p_min_kw": assets.batt_p_min,
                "soc_min_kwh": assets.soc_min,
                "soc_max_kwh": assets.soc_max,
                "soc_init_kwh": assets.soc_init,
                "eta": assets.eta,
                "power_factor": assets.power_factor,
            }
        buses.append(item)

    lines = [
        {
            "from": line.from_bus,
            "to": line.to_bus,
            "r_ohm": _clean(line.r * z_base),
            "x_ohm": _clean(line.x * z_base),
            "s_max_kva": _clean(line.s_max * base_kva),
        }
        for line in network.lines
    ]
    document: Dict[str, Any] = {}
    if network.name:
        document["name"] = network.name
    document.update(
        {
            "base_mva": network.base_mva,
            "base_kv": network.base_kv,
            "slack_v": _clean(math.sqrt(network.slack_v), 10),
            "buses": buses,
            "lines": lines,
        }
    )
    return document


def write_network(network: Network, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(serialize_network(network), indent=2), encoding="utf-8")
    return target


__all__ = [
    "Bus",
    "Line",
    "Network",
    "NetworkFormatError",
    "ProsumerAssets",
    "ingest_network",
    "network_from_dict",
    "serialize_network",
    "write_network",
]
