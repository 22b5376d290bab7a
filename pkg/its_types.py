"""
MODELO DE MENSAJES ETSI ITS
===========================
CAM, DENM, SPATEM y MAPEM con campos en escala de cable (enteros),
conversión a unidades SI, centinelas "no disponible" y validación.

Los rangos de ``RANGOS`` son la única fuente de verdad: los usan tanto
``validate`` como el códec.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple, Union

from errores import RangeViolation

# Época ITS: 2004-01-01T00:00:00Z, en segundos Unix
EPOCA_ITS_UNIX_S = 1072915200

TIMESTAMP_ITS_MAX = 4398046511103

RANGOS = {
    "protocol_version": (0, 255),
    "message_id": (0, 255),
    "station_id": (0, 4294967295),
    "latitude": (-900000000, 900000001),
    "longitude": (-1800000000, 1800000001),
    "altitude_value": (-100000, 800001),
    "semi_axis_confidence": (0, 4095),
    "semi_major_orientation": (0, 3601),
    "generation_delta_time": (0, 65535),
    "station_type": (0, 255),
    "heading": (0, 3601),
    "speed": (0, 16383),
    "vehicle_length": (1, 1023),
    "vehicle_width": (1, 62),
    "acceleration": (-160, 161),
    "curvature": (-1023, 1023),
    "yaw_rate": (-32766, 32767),
    "vehicle_role": (0, 15),
    "exterior_lights": (0, 255),
    "path_history": (0, 40),
    "delta_coordinate": (-131071, 131072),
    "sequence_number": (0, 65535),
    "timestamp_its": (0, TIMESTAMP_ITS_MAX),
    "validity_duration": (0, 86400),
    "information_quality": (0, 7),
    "cause_code": (0, 255),
    "sub_cause_code": (0, 255),
    "intersections": (1, 32),
    "intersection_id": (0, 65535),
    "revision": (0, 127),
    "movements": (1, 255),
    "signal_group": (0, 255),
    "min_end_time": (0, 36001),
    "lanes": (1, 255),
    "lane_id": (0, 255),
    "node_offsets": (2, 63),
    "node_offset": (-32768, 32767),
    "connects_to": (0, 16),
}


# =============================================================================
# ENUMERACIONES
# =============================================================================

class MessageId(enum.IntEnum):
    DENM = 1
    CAM = 2
    SPATEM = 4
    MAPEM = 5


class StationType(enum.IntEnum):
    UNKNOWN = 0
    PEDESTRIAN = 1
    CYCLIST = 2
    MOPED = 3
    MOTORCYCLE = 4
    PASSENGER_CAR = 5
    BUS = 6
    LIGHT_TRUCK = 7
    HEAVY_TRUCK = 8
    TRAILER = 9
    SPECIAL_VEHICLES = 10
    TRAM = 11
    ROAD_SIDE_UNIT = 15


class DriveDirection(enum.IntEnum):
    FORWARD = 0
    BACKWARD = 1
    UNAVAILABLE = 2


class MovementPhaseState(enum.IntEnum):
    UNAVAILABLE = 0
    DARK = 1
    STOP_THEN_PROCEED = 2
    STOP_AND_REMAIN = 3
    PRE_MOVEMENT = 4
    PERMISSIVE_MOVEMENT_ALLOWED = 5
    PROTECTED_MOVEMENT_ALLOWED = 6
    PERMISSIVE_CLEARANCE = 7
    PROTECTED_CLEARANCE = 8
    CAUTION_CONFLICTING_TRAFFIC = 9


# =============================================================================
# TIPOS
# =============================================================================

@dataclass(frozen=True)
class ItsPduHeader:
    protocol_version: int
    message_id: int
    station_id: int


@dataclass(frozen=True)
class ReferencePosition:
    latitude: int = 900000001
    longitude: int = 1800000001
    altitude_value: int = 800001
    semi_major_confidence: int = 4095
    semi_minor_confidence: int = 4095
    semi_major_orientation: int = 3601


@dataclass(frozen=True)
class BasicContainer:
    station_type: int
    reference_position: ReferencePosition


@dataclass(frozen=True)
class HighFrequencyContainer:
    heading: int = 3601
    speed: int = 16383
    drive_direction: DriveDirection = DriveDirection.UNAVAILABLE
    vehicle_length: int = 1023
    vehicle_width: int = 62
    longitudinal_acceleration: int = 161
    curvature: int = 1023
    yaw_rate: int = 32767
    vertical_acceleration: Optional[int] = None


@dataclass(frozen=True)
class DeltaPosition:
    delta_latitude: int
    delta_longitude: int


@dataclass(frozen=True)
class LowFrequencyContainer:
    vehicle_role: int = 0
    exterior_lights: int = 0
    path_history: Tuple[DeltaPosition, ...] = ()


@dataclass(frozen=True)
class Cam:
    header: ItsPduHeader
    generation_delta_time: int
    basic: BasicContainer
    high_frequency: HighFrequencyContainer
    low_frequency: Optional[LowFrequencyContainer] = None
    special_vehicle: bool = False


@dataclass(frozen=True)
class ActionId:
    originating_station_id: int
    sequence_number: int


@dataclass(frozen=True)
class ManagementContainer:
    action_id: ActionId
    detection_time: int
    reference_time: int
    event_position: ReferencePosition
    validity_duration: int = 600
    station_type: int = 0


@dataclass(frozen=True)
class EventType:
    cause_code: int
    sub_cause_code: int


@dataclass(frozen=True)
class SituationContainer:
    information_quality: int
    event_type: EventType


@dataclass(frozen=True)
class Denm:
    header: ItsPduHeader
    management: ManagementContainer
    situation: Optional[SituationContainer] = None


@dataclass(frozen=True)
class MovementState:
    signal_group: int
    event_state: MovementPhaseState
    min_end_time: Optional[int] = None


@dataclass(frozen=True)
class IntersectionState:
    intersection_id: int
    revision: int
    movements: Tuple[MovementState, ...]


@dataclass(frozen=True)
class Spatem:
    header: ItsPduHeader
    intersections: Tuple[IntersectionState, ...]


@dataclass(frozen=True)
class NodeOffset:
    dx: int
    dy: int


@dataclass(frozen=True)
class Connection:
    lane_id: int
    signal_group: Optional[int] = None


@dataclass(frozen=True)
class GenericLane:
    lane_id: int
    ingress: bool
    node_offsets: Tuple[NodeOffset, ...]
    connects_to: Tuple[Connection, ...] = ()


@dataclass(frozen=True)
class IntersectionGeometry:
    intersection_id: int
    ref_point: ReferencePosition
    lanes: Tuple[GenericLane, ...]


@dataclass(frozen=True)
class Mapem:
    header: ItsPduHeader
    intersections: Tuple[IntersectionGeometry, ...]


ItsMessage = Union[Cam, Denm, Spatem, Mapem]

TIPO_POR_ID = {
    MessageId.DENM: Denm,
    MessageId.CAM: Cam,
    MessageId.SPATEM: Spatem,
    MessageId.MAPEM: Mapem,
}

NOMBRE_POR_TIPO = {Cam: "cam", Denm: "denm", Spatem: "spatem", Mapem: "mapem"}
TIPO_POR_NOMBRE = {nombre: tipo for tipo, nombre in NOMBRE_POR_TIPO.items()}
ID_POR_TIPO = {tipo: int(mid) for mid, tipo in TIPO_POR_ID.items()}


def message_type_name(msg: ItsMessage) -> str:
    """'cam' | 'denm' | 'spatem' | 'mapem'"""
    return NOMBRE_POR_TIPO[type(msg)]


# =============================================================================
# TIEMPO
# =============================================================================

def generation_delta_time(timestamp_its: int) -> int:
    """generationDeltaTime = TimestampIts mod 65536"""
    return timestamp_its % 65536


def timestamp_its(unix_ns: int) -> int:
    """Milisegundos desde la época ITS (sin segundos intercalares)"""
    return unix_ns // 1_000_000 - EPOCA_ITS_UNIX_S * 1000


def unix_ns_desde_its(ms_its: int) -> int:
    return (ms_its + EPOCA_ITS_UNIX_S * 1000) * 1_000_000


# =============================================================================
# UNIDADES
# =============================================================================

class Unavailable(enum.Enum):
    """Marcador para valores centinela"""

    UNAVAILABLE = "unavailable"

    def __repr__(self) -> str:
        return "UNAVAILABLE"


UNAVAILABLE = Unavailable.UNAVAILABLE


class _Escala(NamedTuple):
    campo: str
    rango: str
    factor: float
    centinela: Optional[int]
    unidad: str


class FieldKind(enum.Enum):
    LATITUDE = _Escala("latitude", "latitude", 1e-7, 900000001, "°")
    LONGITUDE = _Escala("longitude", "longitude", 1e-7, 1800000001, "°")
    ALTITUDE = _Escala("altitude", "altitude_value", 0.01, 800001, "m")
    SPEED = _Escala("speed", "speed", 0.01, 16383, "m/s")
    HEADING = _Escala("heading", "heading", 0.1, 3601, "°")
    VEHICLE_LENGTH = _Escala("vehicle_length", "vehicle_length", 0.1, 1023, "m")
    VEHICLE_WIDTH = _Escala("vehicle_width", "vehicle_width", 0.1, 62, "m")
    LONGITUDINAL_ACCELERATION = _Escala("longitudinal_acceleration", "acceleration", 0.1, 161, "m/s²")
    VERTICAL_ACCELERATION = _Escala("vertical_acceleration", "acceleration", 0.1, 161, "m/s²")
    CURVATURE = _Escala("curvature", "curvature", 1 / 30000, 1023, "1/m")
    YAW_RATE = _Escala("yaw_rate", "yaw_rate", 0.01, 32767, "°/s")
    SEMI_AXIS_CONFIDENCE = _Escala("semi_axis_confidence", "semi_axis_confidence", 0.01, 4095, "m")
    SEMI_MAJOR_ORIENTATION = _Escala("semi_major_orientation", "semi_major_orientation", 0.1, 3601, "°")
    MIN_END_TIME = _Escala("min_end_time", "min_end_time", 0.1, 36001, "s")
    DELTA_LATITUDE = _Escala("delta_latitude", "delta_coordinate", 1e-7, 131072, "°")
    DELTA_LONGITUDE = _Escala("delta_longitude", "delta_coordinate", 1e-7, 131072, "°")
    NODE_OFFSET = _Escala("node_offset", "node_offset", 0.01, None, "m")


def wire_to_si(kind: FieldKind, wire: int) -> Union[float, Unavailable]:
    """
    Convierte un valor de cable a unidades SI

    Args:
        kind: Tipo de campo
        wire: Valor entero tal como viaja en el mensaje

    Returns:
        Valor en SI, o UNAVAILABLE si es el centinela del campo

    Raises:
        RangeViolation: Si wire está fuera del rango declarado
    """
    escala = kind.value
    lo, hi = RANGOS[escala.rango]
    if not lo <= wire <= hi:
        raise RangeViolation(f"{kind.name.lower()}={wire} fuera de [{lo}, {hi}]")
    if wire == escala.centinela:
        return UNAVAILABLE
    return wire * escala.factor


def si_to_wire(kind: FieldKind, value: Union[float, Unavailable]) -> int:
    """Inversa de ``wire_to_si``: redondea al paso de cable más cercano"""
    escala = kind.value
    if value is UNAVAILABLE:
        if escala.centinela is None:
            raise RangeViolation(f"{kind.name.lower()} no tiene valor 'no disponible'")
        return escala.centinela
    wire = round(value / escala.factor)
    lo, hi = RANGOS[escala.rango]
    if not lo <= wire <= hi:
        raise RangeViolation(f"{kind.name.lower()}={value} fuera de rango")
    return wire


# =============================================================================
# VALIDACIÓN
# =============================================================================

@dataclass(frozen=True)
class Violation:
    path: str
    reason: str


class _Validador:
    """Acumula violaciones en orden de declaración de campos"""

    def __init__(self):
        self.violaciones: List[Violation] = []

    def rango(self, path: str, valor, nombre_rango: str) -> None:
        lo, hi = RANGOS[nombre_rango]
        if isinstance(valor, bool) or not isinstance(valor, int):
            self.violaciones.append(Violation(path, f"se esperaba un entero, no {type(valor).__name__}"))
        elif not lo <= valor <= hi:
            self.violaciones.append(Violation(path, f"{valor} fuera de [{lo}, {hi}]"))

    def enum(self, path: str, valor, tipo) -> None:
        if isinstance(valor, bool) or not isinstance(valor, int) or valor not in set(int(v) for v in tipo):
            self.violaciones.append(Violation(path, f"{valor!r} no es un {tipo.__name__}"))

    def es(self, path: str, valor, tipo) -> bool:
        if isinstance(valor, tipo):
            return True
        self.violaciones.append(Violation(path, f"se esperaba {tipo.__name__}, no {type(valor).__name__}"))
        return False

    def tamano(self, path: str, secuencia, nombre_rango: str) -> bool:
        lo, hi = RANGOS[nombre_rango]
        if not isinstance(secuencia, (tuple, list)):
            self.violaciones.append(Violation(path, f"se esperaba una secuencia, no {type(secuencia).__name__}"))
            return False
        if not lo <= len(secuencia) <= hi:
            self.violaciones.append(Violation(path, f"{len(secuencia)} elementos, se admiten [{lo}, {hi}]"))
            return False
        return True

    def regla(self, path: str, cumple: bool, motivo: str) -> None:
        if not cumple:
            self.violaciones.append(Violation(path, motivo))

    def posicion(self, path: str, pos: ReferencePosition) -> None:
        if not self.es(path, pos, ReferencePosition):
            return
        self.rango(f"{path}.latitude", pos.latitude, "latitude")
        self.rango(f"{path}.longitude", pos.longitude, "longitude")
        self.rango(f"{path}.altitude_value", pos.altitude_value, "altitude_value")
        self.rango(f"{path}.semi_major_confidence", pos.semi_major_confidence, "semi_axis_confidence")
        self.rango(f"{path}.semi_minor_confidence", pos.semi_minor_confidence, "semi_axis_confidence")
        self.rango(f"{path}.semi_major_orientation", pos.semi_major_orientation, "semi_major_orientation")

    def cabecera(self, header: ItsPduHeader, esperado: int) -> None:
        if not self.es("header", header, ItsPduHeader):
            return
        self.rango("header.protocol_version", header.protocol_version, "protocol_version")
        self.rango("header.message_id", header.message_id, "message_id")
        self.regla("header.message_id", header.message_id == esperado,
                   f"{header.message_id} no corresponde al tipo (se esperaba {esperado})")
        self.rango("header.station_id", header.station_id, "station_id")

    def cam(self, msg: Cam) -> None:
        self.rango("generation_delta_time", msg.generation_delta_time, "generation_delta_time")
        if self.es("basic", msg.basic, BasicContainer):
            self.rango("basic.station_type", msg.basic.station_type, "station_type")
            self.posicion("basic.reference_position", msg.basic.reference_position)
        hf = msg.high_frequency
        if self.es("high_frequency", hf, HighFrequencyContainer):
            self.alta_frecuencia(hf)
        lf = msg.low_frequency
        if lf is not None and self.es("low_frequency", lf, LowFrequencyContainer):
            self.baja_frecuencia(lf)
        self.regla("special_vehicle", isinstance(msg.special_vehicle, bool), "se esperaba un booleano")

    def alta_frecuencia(self, hf: HighFrequencyContainer) -> None:
        self.rango("high_frequency.heading", hf.heading, "heading")
        self.rango("high_frequency.speed", hf.speed, "speed")
        self.enum("high_frequency.drive_direction", hf.drive_direction, DriveDirection)
        self.rango("high_frequency.vehicle_length", hf.vehicle_length, "vehicle_length")
        self.rango("high_frequency.vehicle_width", hf.vehicle_width, "vehicle_width")
        self.rango("high_frequency.longitudinal_acceleration", hf.longitudinal_acceleration, "acceleration")
        self.rango("high_frequency.curvature", hf.curvature, "curvature")
        self.rango("high_frequency.yaw_rate", hf.yaw_rate, "yaw_rate")
        if hf.vertical_acceleration is not None:
            self.rango("high_frequency.vertical_acceleration", hf.vertical_acceleration, "acceleration")

    def baja_frecuencia(self, lf: LowFrequencyContainer) -> None:
        self.rango("low_frequency.vehicle_role", lf.vehicle_role, "vehicle_role")
        self.rango("low_frequency.exterior_lights", lf.exterior_lights, "exterior_lights")
        if self.tamano("low_frequency.path_history", lf.path_history, "path_history"):
            for i, delta in enumerate(lf.path_history):
                base = f"low_frequency.path_history[{i}]"
                if self.es(base, delta, DeltaPosition):
                    self.rango(f"{base}.delta_latitude", delta.delta_latitude, "delta_coordinate")
                    self.rango(f"{base}.delta_longitude", delta.delta_longitude, "delta_coordinate")

    def denm(self, msg: Denm) -> None:
        m = msg.management
        if self.es("management", m, ManagementContainer):
            self.gestion(m)
        s = msg.situation
        if s is not None and self.es("situation", s, SituationContainer):
            self.rango("situation.information_quality", s.information_quality, "information_quality")
            if self.es("situation.event_type", s.event_type, EventType):
                self.rango("situation.event_type.cause_code", s.event_type.cause_code, "cause_code")
                self.rango("situation.event_type.sub_cause_code", s.event_type.sub_cause_code, "sub_cause_code")

    def gestion(self, m: ManagementContainer) -> None:
        if self.es("management.action_id", m.action_id, ActionId):
            self.rango("management.action_id.originating_station_id",
                       m.action_id.originating_station_id, "station_id")
            self.rango("management.action_id.sequence_number", m.action_id.sequence_number, "sequence_number")
        self.rango("management.detection_time", m.detection_time, "timestamp_its")
        self.rango("management.reference_time", m.reference_time, "timestamp_its")
        if isinstance(m.reference_time, int) and isinstance(m.detection_time, int):
            self.regla("management.reference_time", m.reference_time >= m.detection_time,
                       "reference_time anterior a detection_time")
        self.posicion("management.event_position", m.event_position)
        self.rango("management.validity_duration", m.validity_duration, "validity_duration")
        self.rango("management.station_type", m.station_type, "station_type")

    def spatem(self, msg: Spatem) -> None:
        if not self.tamano("intersections", msg.intersections, "intersections"):
            return
        for i, inter in enumerate(msg.intersections):
            base = f"intersections[{i}]"
            if not self.es(base, inter, IntersectionState):
                continue
            self.rango(f"{base}.intersection_id", inter.intersection_id, "intersection_id")
            self.rango(f"{base}.revision", inter.revision, "revision")
            if not self.tamano(f"{base}.movements", inter.movements, "movements"):
                continue
            vistos = set()
            for j, mov in enumerate(inter.movements):
                sub = f"{base}.movements[{j}]"
                if not self.es(sub, mov, MovementState):
                    continue
                self.rango(f"{sub}.signal_group", mov.signal_group, "signal_group")
                if isinstance(mov.signal_group, int):
                    self.regla(f"{sub}.signal_group", mov.signal_group not in vistos,
                               f"signal_group {mov.signal_group} repetido en la intersección")
                    vistos.add(mov.signal_group)
                self.enum(f"{sub}.event_state", mov.event_state, MovementPhaseState)
                if mov.min_end_time is not None:
                    self.rango(f"{sub}.min_end_time", mov.min_end_time, "min_end_time")

    def mapem(self, msg: Mapem) -> None:
        if not self.tamano("intersections", msg.intersections, "intersections"):
            return
        for i, inter in enumerate(msg.intersections):
            base = f"intersections[{i}]"
            if not self.es(base, inter, IntersectionGeometry):
                continue
            self.rango(f"{base}.intersection_id", inter.intersection_id, "intersection_id")
            self.posicion(f"{base}.ref_point", inter.ref_point)
            if not self.tamano(f"{base}.lanes", inter.lanes, "lanes"):
                continue
            for j, carril in enumerate(inter.lanes):
                sub = f"{base}.lanes[{j}]"
                if not self.es(sub, carril, GenericLane):
                    continue
                self.rango(f"{sub}.lane_id", carril.lane_id, "lane_id")
                self.regla(f"{sub}.ingress", isinstance(carril.ingress, bool), "se esperaba un booleano")
                if self.tamano(f"{sub}.node_offsets", carril.node_offsets, "node_offsets"):
                    for k, nodo in enumerate(carril.node_offsets):
                        if self.es(f"{sub}.node_offsets[{k}]", nodo, NodeOffset):
                            self.rango(f"{sub}.node_offsets[{k}].dx", nodo.dx, "node_offset")
                            self.rango(f"{sub}.node_offsets[{k}].dy", nodo.dy, "node_offset")
                if self.tamano(f"{sub}.connects_to", carril.connects_to, "connects_to"):
                    for k, con in enumerate(carril.connects_to):
                        if not self.es(f"{sub}.connects_to[{k}]", con, Connection):
                            continue
                        self.rango(f"{sub}.connects_to[{k}].lane_id", con.lane_id, "lane_id")
                        if con.signal_group is not None:
                            self.rango(f"{sub}.connects_to[{k}].signal_group", con.signal_group, "signal_group")


def validate(msg: ItsMessage) -> List[Violation]:
    """
    Comprueba rangos e invariantes de un mensaje

    Returns:
        Lista de violaciones en orden de declaración; vacía si el mensaje es válido
    """
    validador = _Validador()
    tipo = type(msg)
    if tipo not in ID_POR_TIPO:
        return [Violation("", f"tipo de mensaje desconocido: {tipo.__name__}")]
    validador.cabecera(msg.header, ID_POR_TIPO[tipo])
    getattr(validador, NOMBRE_POR_TIPO[tipo])(msg)
    return validador.violaciones

