"""
CÓDEC UPER DEL PERFIL ITS
=========================
Codifica y decodifica CAM, DENM, SPATEM y MAPEM sobre las primitivas de
``bitcodec``. Orden de campos = orden de declaración en ``its_types``.

Formato: cabecera ItsPduHeader (48 bits) + cuerpo, último octeto
rellenado con ceros.

Cada tramo de campos de tamaño fijo es un ``Grupo`` construido una vez a
partir de ``RANGOS``: se lee y escribe con una sola operación.
"""

from typing import Callable, Dict, Sequence

from bitcodec import (
    BitBuffer,
    Grupo,
    read_constrained_group,
    read_constrained_int,
    read_constrained_series,
    write_constrained_group,
    write_constrained_int,
    write_constrained_series,
)
from errores import InvalidMessage, PaddingNonZero, Truncated, UnknownMessageId
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
    ItsMessage,
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
    validate,
)

OCTETOS_CABECERA = 6


def _w(buf: BitBuffer, valor: int, rango: str) -> None:
    lo, hi = RANGOS[rango]
    write_constrained_int(buf, valor, lo, hi)


def _r(buf: BitBuffer, rango: str) -> int:
    lo, hi = RANGOS[rango]
    return read_constrained_int(buf, lo, hi)


def _grupo(*campos) -> Grupo:
    """
    Construye un grupo a partir de nombres de ``RANGOS``

    "ext" es un bit de extensión, "flag" un bit de presencia o booleano y
    una tupla (lo, hi) un rango explícito.
    """
    rangos, extensiones = [], []
    for i, campo in enumerate(campos):
        if campo == "ext":
            extensiones.append(i)
            rangos.append((0, 1))
        elif campo == "flag":
            rangos.append((0, 1))
        elif isinstance(campo, tuple):
            rangos.append(campo)
        else:
            rangos.append(RANGOS[campo])
    return Grupo(rangos, extensiones)


POSICION = (
    "latitude", "longitude", "altitude_value",
    "semi_axis_confidence", "semi_axis_confidence", "semi_major_orientation",
)
SENTIDO = (0, len(DriveDirection) - 1)
FASE = (0, len(MovementPhaseState) - 1)

G_CABECERA = _grupo("protocol_version", "message_id", "station_id")
G_CAM = _grupo(
    "ext", "flag", "flag", "generation_delta_time",
    "ext", "station_type", *POSICION,
    "ext", "flag", "heading", "speed", SENTIDO, "vehicle_length", "vehicle_width",
    "acceleration", "curvature", "yaw_rate",
)
G_BAJA_FRECUENCIA = _grupo("ext", "vehicle_role", "exterior_lights", "path_history")
G_DENM = _grupo(
    "ext", "flag",
    "ext", "station_id", "sequence_number", "timestamp_its", "timestamp_its", *POSICION,
    "validity_duration", "station_type",
)
G_SITUACION = _grupo("ext", "information_quality", "cause_code", "sub_cause_code")
G_INTERSECCIONES = _grupo("ext", "intersections")
G_ESTADO_INTERSECCION = _grupo("ext", "intersection_id", "revision", "movements")
G_MOVIMIENTO = _grupo("ext", "flag", "signal_group", FASE)
G_GEOMETRIA = _grupo("ext", "intersection_id", *POSICION, "lanes")
G_CARRIL = _grupo("ext", "lane_id", "flag", "node_offsets")
G_CONEXION = _grupo("flag", "lane_id")


def _campos_posicion(p: ReferencePosition) -> tuple:
    return (
        p.latitude, p.longitude, p.altitude_value,
        p.semi_major_confidence, p.semi_minor_confidence, p.semi_major_orientation,
    )


def _posicion(valores: Sequence[int]) -> ReferencePosition:
    lat, lon, alt, mayor, menor, orientacion = valores
    return ReferencePosition(
        latitude=lat,
        longitude=lon,
        altitude_value=alt,
        semi_major_confidence=mayor,
        semi_minor_confidence=menor,
        semi_major_orientation=orientacion,
    )


# =============================================================================
# TIPOS COMUNES
# =============================================================================

def _escribir_cabecera(buf: BitBuffer, h: ItsPduHeader) -> None:
    write_constrained_group(buf, G_CABECERA, (h.protocol_version, h.message_id, h.station_id))


def _leer_cabecera(buf: BitBuffer) -> ItsPduHeader:
    version, ident, estacion = read_constrained_group(buf, G_CABECERA)
    return ItsPduHeader(protocol_version=version, message_id=ident, station_id=estacion)


# =============================================================================
# CAM
# =============================================================================

def _escribir_cam(buf: BitBuffer, m: Cam) -> None:
    hf = m.high_frequency
    write_constrained_group(buf, G_CAM, (
        0, int(m.low_frequency is not None), int(m.special_vehicle), m.generation_delta_time,
        0, m.basic.station_type, *_campos_posicion(m.basic.reference_position),
        0, int(hf.vertical_acceleration is not None), hf.heading, hf.speed, int(hf.drive_direction),
        hf.vehicle_length, hf.vehicle_width, hf.longitudinal_acceleration, hf.curvature, hf.yaw_rate,
    ))
    if hf.vertical_acceleration is not None:
        _w(buf, hf.vertical_acceleration, "acceleration")

    lf = m.low_frequency
    if lf is not None:
        write_constrained_group(buf, G_BAJA_FRECUENCIA, (0, lf.vehicle_role, lf.exterior_lights, len(lf.path_history)))
        write_constrained_series(
            buf,
            [c for d in lf.path_history for c in (d.delta_latitude, d.delta_longitude)],
            *RANGOS["delta_coordinate"],
        )
    # special_vehicle: solo el bit de presencia


def _leer_cam(buf: BitBuffer, header: ItsPduHeader) -> Cam:
    (_, hay_lf, hay_especial, gdt,
     _, tipo, *pos,
     _, hay_vertical, rumbo, velocidad, sentido, largo, ancho, acel, curvatura, giro) = read_constrained_group(buf, G_CAM)
    hf = HighFrequencyContainer(
        heading=rumbo,
        speed=velocidad,
        drive_direction=DriveDirection(sentido),
        vehicle_length=largo,
        vehicle_width=ancho,
        longitudinal_acceleration=acel,
        curvature=curvatura,
        yaw_rate=giro,
        vertical_acceleration=_r(buf, "acceleration") if hay_vertical else None,
    )

    lf = None
    if hay_lf:
        _, rol, luces, n = read_constrained_group(buf, G_BAJA_FRECUENCIA)
        deltas = read_constrained_series(buf, 2 * n, *RANGOS["delta_coordinate"])
        historial = tuple(DeltaPosition(deltas[i], deltas[i + 1]) for i in range(0, 2 * n, 2))
        lf = LowFrequencyContainer(vehicle_role=rol, exterior_lights=luces, path_history=historial)

    return Cam(
        header=header,
        generation_delta_time=gdt,
        basic=BasicContainer(station_type=tipo, reference_position=_posicion(pos)),
        high_frequency=hf,
        low_frequency=lf,
        special_vehicle=bool(hay_especial),
    )


# =============================================================================
# DENM
# =============================================================================

def _escribir_denm(buf: BitBuffer, m: Denm) -> None:
    g = m.management
    s = m.situation
    write_constrained_group(buf, G_DENM, (
        0, int(s is not None),
        0, g.action_id.originating_station_id, g.action_id.sequence_number,
        g.detection_time, g.reference_time, *_campos_posicion(g.event_position),
        g.validity_duration, g.station_type,
    ))
    if s is not None:
        write_constrained_group(buf, G_SITUACION, (
            0, s.information_quality, s.event_type.cause_code, s.event_type.sub_cause_code,
        ))


def _leer_denm(buf: BitBuffer, header: ItsPduHeader) -> Denm:
    (_, hay_situacion,
     _, origen, secuencia, deteccion, referencia, *pos,
     validez, tipo) = read_constrained_group(buf, G_DENM)
    gestion = ManagementContainer(
        action_id=ActionId(origen, secuencia),
        detection_time=deteccion,
        reference_time=referencia,
        event_position=_posicion(pos),
        validity_duration=validez,
        station_type=tipo,
    )

    situacion = None
    if hay_situacion:
        _, calidad, causa, subcausa = read_constrained_group(buf, G_SITUACION)
        situacion = SituationContainer(information_quality=calidad, event_type=EventType(causa, subcausa))
    return Denm(header=header, management=gestion, situation=situacion)


# =============================================================================
# SPATEM
# =============================================================================

def _escribir_spatem(buf: BitBuffer, m: Spatem) -> None:
    write_constrained_group(buf, G_INTERSECCIONES, (0, len(m.intersections)))
    for inter in m.intersections:
        write_constrained_group(buf, G_ESTADO_INTERSECCION, (
            0, inter.intersection_id, inter.revision, len(inter.movements),
        ))
        for mov in inter.movements:
            write_constrained_group(buf, G_MOVIMIENTO, (
                0, int(mov.min_end_time is not None), mov.signal_group, int(mov.event_state),
            ))
            if mov.min_end_time is not None:
                _w(buf, mov.min_end_time, "min_end_time")


def _leer_movimiento(buf: BitBuffer) -> MovementState:
    _, hay_fin, grupo, estado = read_constrained_group(buf, G_MOVIMIENTO)
    fin = _r(buf, "min_end_time") if hay_fin else None
    return MovementState(signal_group=grupo, event_state=MovementPhaseState(estado), min_end_time=fin)


def _leer_spatem(buf: BitBuffer, header: ItsPduHeader) -> Spatem:
    _, n = read_constrained_group(buf, G_INTERSECCIONES)
    intersecciones = []
    for _ in range(n):
        _, ident, revision, n_movimientos = read_constrained_group(buf, G_ESTADO_INTERSECCION)
        movimientos = tuple(_leer_movimiento(buf) for _ in range(n_movimientos))
        intersecciones.append(IntersectionState(ident, revision, movimientos))
    return Spatem(header=header, intersections=tuple(intersecciones))


# =============================================================================
# MAPEM
# =============================================================================

def _escribir_mapem(buf: BitBuffer, m: Mapem) -> None:
    write_constrained_group(buf, G_INTERSECCIONES, (0, len(m.intersections)))
    for inter in m.intersections:
        write_constrained_group(buf, G_GEOMETRIA, (
            0, inter.intersection_id, *_campos_posicion(inter.ref_point), len(inter.lanes),
        ))
        for carril in inter.lanes:
            write_constrained_group(buf, G_CARRIL, (
                0, carril.lane_id, int(carril.ingress), len(carril.node_offsets),
            ))
            write_constrained_series(
                buf, [c for nodo in carril.node_offsets for c in (nodo.dx, nodo.dy)], *RANGOS["node_offset"],
            )
            _w(buf, len(carril.connects_to), "connects_to")
            for con in carril.connects_to:
                write_constrained_group(buf, G_CONEXION, (int(con.signal_group is not None), con.lane_id))
                if con.signal_group is not None:
                    _w(buf, con.signal_group, "signal_group")


def _leer_carril(buf: BitBuffer) -> GenericLane:
    _, ident, entrada, n = read_constrained_group(buf, G_CARRIL)
    coordenadas = read_constrained_series(buf, 2 * n, *RANGOS["node_offset"])
    nodos = tuple(NodeOffset(coordenadas[i], coordenadas[i + 1]) for i in range(0, 2 * n, 2))
    conexiones = []
    for _ in range(_r(buf, "connects_to")):
        hay_grupo, carril = read_constrained_group(buf, G_CONEXION)
        grupo = _r(buf, "signal_group") if hay_grupo else None
        conexiones.append(Connection(lane_id=carril, signal_group=grupo))
    return GenericLane(lane_id=ident, ingress=bool(entrada), node_offsets=nodos, connects_to=tuple(conexiones))


def _leer_mapem(buf: BitBuffer, header: ItsPduHeader) -> Mapem:
    _, n = read_constrained_group(buf, G_INTERSECCIONES)
    intersecciones = []
    for _ in range(n):
        _, ident, *resto = read_constrained_group(buf, G_GEOMETRIA)
        *pos, n_carriles = resto
        carriles = tuple(_leer_carril(buf) for _ in range(n_carriles))
        intersecciones.append(IntersectionGeometry(ident, _posicion(pos), carriles))
    return Mapem(header=header, intersections=tuple(intersecciones))


# =============================================================================
# API
# =============================================================================

_ESCRITORES: Dict[type, Callable[[BitBuffer, ItsMessage], None]] = {
    Cam: _escribir_cam,
    Denm: _escribir_denm,
    Spatem: _escribir_spatem,
    Mapem: _escribir_mapem,
}

_LECTORES: Dict[int, Callable[[BitBuffer, ItsPduHeader], ItsMessage]] = {
    MessageId.DENM: _leer_denm,
    MessageId.CAM: _leer_cam,
    MessageId.SPATEM: _leer_spatem,
    MessageId.MAPEM: _leer_mapem,
}


def encode_message(msg: ItsMessage) -> bytes:
    """
    Codifica un mensaje en UPER

    Args:
        msg: Mensaje del perfil (Cam, Denm, Spatem o Mapem)

    Returns:
        Payload determinista (cabecera + cuerpo, relleno con ceros)

    Raises:
        InvalidMessage: Si ``validate(msg)`` no está vacío
    """
    violaciones = validate(msg)
    if violaciones:
        raise InvalidMessage(violaciones)
    buf = BitBuffer()
    _escribir_cabecera(buf, msg.header)
    _ESCRITORES[type(msg)](buf, msg)
    return buf.to_bytes()


def peek_header(payload: bytes) -> ItsPduHeader:
    """Lee solo la cabecera, sin decodificar el cuerpo"""
    if len(payload) < OCTETOS_CABECERA:
        raise Truncated(f"la cabecera ocupa {OCTETOS_CABECERA} octetos, llegaron {len(payload)}")
    return _leer_cabecera(BitBuffer(bytes(payload[:OCTETOS_CABECERA])))


def decode_message(payload: bytes) -> ItsMessage:
    """
    Decodifica un payload UPER

    Raises:
        UnknownMessageId: messageId fuera de {1, 2, 4, 5}
        Truncated: faltan bits
        UnsupportedExtension: bit de extensión a 1
        RangeViolation: valor fuera de rango
        PaddingNonZero: relleno no nulo o datos sobrantes
    """
    buf = BitBuffer(bytes(payload))
    header = _leer_cabecera(buf)
    lector = _LECTORES.get(header.message_id)
    if lector is None:
        raise UnknownMessageId(f"messageId {header.message_id} no pertenece al perfil")
    msg = lector(buf, header)

    sobrantes = buf.restantes()
    if sobrantes >= 8:
        raise PaddingNonZero(f"{sobrantes // 8} octetos sobrantes tras el mensaje")
    if sobrantes and buf.leer(sobrantes) != 0:
        raise PaddingNonZero("bits de relleno distintos de cero")
    return msg
