"""
Fixtures compartidas: mensajes mínimos, oráculo de ensamblado de bits y
generadores aleatorios de mensajes válidos.
"""

import random

import pytest

from its_types import (
    RANGOS,
    ActionId,
    BasicContainer,
    Cam,
    Connection,
    DeltaPosition,
    Denm,
    DriveDirection,
    EventType,
    GenericLane,
    HighFrequencyContainer,
    IntersectionGeometry,
    IntersectionState,
    ItsPduHeader,
    LowFrequencyContainer,
    ManagementContainer,
    Mapem,
    MessageId,
    MovementPhaseState,
    MovementState,
    NodeOffset,
    ReferencePosition,
    SituationContainer,
    Spatem,
)

ESTACION = 1234


# =============================================================================
# ORÁCULO
# =============================================================================

def ensamblar_bits(campos):
    """
    Concatena campos (valor, lo, hi) como offset binario big-endian

    Independiente de bitcodec: solo usa format().
    """
    bits = []
    for valor, lo, hi in campos:
        ancho = (hi - lo).bit_length()
        if ancho:
            bits.append(format(valor - lo, f"0{ancho}b"))
    return "".join(bits)


def bits_a_bytes(bits: str) -> bytes:
    bits = bits + "0" * (-len(bits) % 8)
    return bytes(int(bits[i:i + 8], 2) for i in range(0, len(bits), 8))


def r(nombre):
    return RANGOS[nombre]


def campos_cam_minima(station_id=ESTACION):
    """Campos de la CAM mínima en orden de cable"""
    pos = ReferencePosition()
    return [
        (2, *r("protocol_version")), (2, *r("message_id")), (station_id, *r("station_id")),
        (0, 0, 1),                      # extensión
        (0, 0, 1), (0, 0, 1),           # low_frequency, special_vehicle ausentes
        (0, *r("generation_delta_time")),
        (0, 0, 1), (0, *r("station_type")),
        (pos.latitude, *r("latitude")), (pos.longitude, *r("longitude")),
        (pos.altitude_value, *r("altitude_value")),
        (4095, *r("semi_axis_confidence")), (4095, *r("semi_axis_confidence")),
        (3601, *r("semi_major_orientation")),
        (0, 0, 1), (0, 0, 1),           # extensión HF, vertical_acceleration ausente
        (3601, *r("heading")), (16383, *r("speed")), (2, 0, 2),
        (1023, *r("vehicle_length")), (62, *r("vehicle_width")),
        (161, *r("acceleration")), (1023, *r("curvature")), (32767, *r("yaw_rate")),
    ]


# =============================================================================
# MENSAJES MÍNIMOS
# =============================================================================

def hacer_cam(station_id=ESTACION, lat=None, lon=None, longitud=1023, anchura=62, station_type=0, velocidad=16383):
    pos = ReferencePosition() if lat is None else ReferencePosition(
        latitude=round(lat * 1e7), longitude=round(lon * 1e7),
    )
    return Cam(
        header=ItsPduHeader(2, int(MessageId.CAM), station_id),
        generation_delta_time=0,
        basic=BasicContainer(station_type=station_type, reference_position=pos),
        high_frequency=HighFrequencyContainer(speed=velocidad, vehicle_length=longitud, vehicle_width=anchura),
    )


def hacer_denm(station_id=ESTACION, causa=94, subcausa=0, secuencia=0, situacion=True, deteccion=600_000_000_000):
    return Denm(
        header=ItsPduHeader(2, int(MessageId.DENM), station_id),
        management=ManagementContainer(
            action_id=ActionId(station_id, secuencia),
            detection_time=deteccion,
            reference_time=deteccion + 1000,
            event_position=ReferencePosition(latitude=507753000, longitude=60839000),
        ),
        situation=SituationContainer(3, EventType(causa, subcausa)) if situacion else None,
    )


def hacer_spatem(station_id=ESTACION):
    return Spatem(
        header=ItsPduHeader(2, int(MessageId.SPATEM), station_id),
        intersections=(IntersectionState(
            intersection_id=7,
            revision=1,
            movements=(
                MovementState(1, MovementPhaseState.PROTECTED_MOVEMENT_ALLOWED, 1200),
                MovementState(2, MovementPhaseState.STOP_AND_REMAIN),
            ),
        ),),
    )


def hacer_mapem(station_id=ESTACION):
    return Mapem(
        header=ItsPduHeader(2, int(MessageId.MAPEM), station_id),
        intersections=(IntersectionGeometry(
            intersection_id=7,
            ref_point=ReferencePosition(latitude=507753000, longitude=60839000),
            lanes=(
                GenericLane(1, True, (NodeOffset(0, 3000), NodeOffset(0, 500)), (Connection(2, 1),)),
                GenericLane(2, False, (NodeOffset(0, -500), NodeOffset(0, -3000))),
            ),
        ),),
    )


@pytest.fixture
def cam_minima():
    return hacer_cam()


@pytest.fixture
def denm_minima():
    return hacer_denm()


# =============================================================================
# GENERADORES ALEATORIOS
# =============================================================================

def _v(rng: random.Random, nombre: str) -> int:
    return rng.randint(*RANGOS[nombre])


def _posicion(rng):
    return ReferencePosition(
        latitude=_v(rng, "latitude"),
        longitude=_v(rng, "longitude"),
        altitude_value=_v(rng, "altitude_value"),
        semi_major_confidence=_v(rng, "semi_axis_confidence"),
        semi_minor_confidence=_v(rng, "semi_axis_confidence"),
        semi_major_orientation=_v(rng, "semi_major_orientation"),
    )


def cam_aleatoria(rng: random.Random) -> Cam:
    baja = None
    if rng.random() < 0.5:
        baja = LowFrequencyContainer(
            vehicle_role=_v(rng, "vehicle_role"),
            exterior_lights=_v(rng, "exterior_lights"),
            path_history=tuple(
                DeltaPosition(_v(rng, "delta_coordinate"), _v(rng, "delta_coordinate"))
                for _ in range(rng.randint(0, 40))
            ),
        )
    return Cam(
        header=ItsPduHeader(_v(rng, "protocol_version"), int(MessageId.CAM), _v(rng, "station_id")),
        generation_delta_time=_v(rng, "generation_delta_time"),
        basic=BasicContainer(_v(rng, "station_type"), _posicion(rng)),
        high_frequency=HighFrequencyContainer(
            heading=_v(rng, "heading"),
            speed=_v(rng, "speed"),
            drive_direction=rng.choice(list(DriveDirection)),
            vehicle_length=_v(rng, "vehicle_length"),
            vehicle_width=_v(rng, "vehicle_width"),
            longitudinal_acceleration=_v(rng, "acceleration"),
            curvature=_v(rng, "curvature"),
            yaw_rate=_v(rng, "yaw_rate"),
            vertical_acceleration=_v(rng, "acceleration") if rng.random() < 0.5 else None,
        ),
        low_frequency=baja,
        special_vehicle=rng.random() < 0.2,
    )


def denm_aleatoria(rng: random.Random) -> Denm:
    deteccion = _v(rng, "timestamp_its")
    return Denm(
        header=ItsPduHeader(_v(rng, "protocol_version"), int(MessageId.DENM), _v(rng, "station_id")),
        management=ManagementContainer(
            action_id=ActionId(_v(rng, "station_id"), _v(rng, "sequence_number")),
            detection_time=deteccion,
            reference_time=rng.randint(deteccion, RANGOS["timestamp_its"][1]),
            event_position=_posicion(rng),
            validity_duration=_v(rng, "validity_duration"),
            station_type=_v(rng, "station_type"),
        ),
        situation=SituationContainer(
            _v(rng, "information_quality"), EventType(_v(rng, "cause_code"), _v(rng, "sub_cause_code")),
        ) if rng.random() < 0.7 else None,
    )


def spatem_aleatoria(rng: random.Random) -> Spatem:
    intersecciones = []
    for _ in range(rng.randint(1, 4)):
        grupos = rng.sample(range(256), rng.randint(1, 12))
        intersecciones.append(IntersectionState(
            intersection_id=_v(rng, "intersection_id"),
            revision=_v(rng, "revision"),
            movements=tuple(
                MovementState(
                    signal_group=g,
                    event_state=rng.choice(list(MovementPhaseState)),
                    min_end_time=_v(rng, "min_end_time") if rng.random() < 0.6 else None,
                )
                for g in grupos
            ),
        ))
    return Spatem(
        header=ItsPduHeader(_v(rng, "protocol_version"), int(MessageId.SPATEM), _v(rng, "station_id")),
        intersections=tuple(intersecciones),
    )


def mapem_aleatoria(rng: random.Random) -> Mapem:
    intersecciones = []
    for _ in range(rng.randint(1, 3)):
        carriles = []
        for _ in range(rng.randint(1, 6)):
            carriles.append(GenericLane(
                lane_id=_v(rng, "lane_id"),
                ingress=rng.random() < 0.5,
                node_offsets=tuple(
                    NodeOffset(_v(rng, "node_offset"), _v(rng, "node_offset")) for _ in range(rng.randint(2, 8))
                ),
                connects_to=tuple(
                    Connection(_v(rng, "lane_id"), _v(rng, "signal_group") if rng.random() < 0.5 else None)
                    for _ in range(rng.randint(0, 4))
                ),
            ))
        intersecciones.append(IntersectionGeometry(
            intersection_id=_v(rng, "intersection_id"),
            ref_point=_posicion(rng),
            lanes=tuple(carriles),
        ))
    return Mapem(
        header=ItsPduHeader(_v(rng, "protocol_version"), int(MessageId.MAPEM), _v(rng, "station_id")),
        intersections=tuple(intersecciones),
    )


GENERADORES = {
    "cam": cam_aleatoria,
    "denm": denm_aleatoria,
    "spatem": spatem_aleatoria,
    "mapem": mapem_aleatoria,
}
