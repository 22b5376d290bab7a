"""
GENERADOR DE TRÁFICO ITS SINTÉTICO
==================================
Simula estaciones ITS deterministas (misma semilla → mismo flujo):

- Vehículos que recorren rutas y emiten CAM con las reglas de disparo
  simplificadas (4 m, 4°, 0,5 m/s; intervalo entre 0,1 s y 1 s).
- Eventos DENM con repeticiones que comparten action_id.
- Intersecciones con plan semafórico de tiempo fijo (SPATEM + MAPEM).
- Una traza GNSS propia opcional.

Exporta la verdad de referencia (distancias, conteos, eventos) para
contrastar el análisis.
"""

import bisect
import dataclasses
import json
import logging
import math
import random
import socket
import time
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from dataset_io import GnssFix
from errores import ConfigError
from gateway import Direccion, handle_datagram
from its_codec import encode_message
from its_types import (
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
    StationType,
    generation_delta_time,
    message_type_name,
    timestamp_its,
    validate,
)
from recorder import RADIO_TIERRA_M, Grabador, Gnss, RecorderConfig, Tick, V2x, haversine

logger = logging.getLogger(__name__)

NS = 1_000_000_000
MS = 1_000_000
PROTOCOLO = 2

# Reglas de disparo de CAM
UMBRAL_POSICION_M = 4.0
UMBRAL_RUMBO_GRADOS = 4.0
UMBRAL_VELOCIDAD_MS = 0.5
INTERVALO_MIN_MS = 100
INTERVALO_MAX_MS = 1000
INTERVALO_BAJA_FRECUENCIA_MS = 500
MAX_HISTORIAL = 23
AMBAR_S = 3.0

CENTRO_AACHEN = (50.7753, 6.0839)
INICIO_POR_DEFECTO_NS = 1_688_169_600 * NS  # 2023-07-01T00:00:00Z

# Pares (longitud, anchura) en escala de cable y su peso en la flota
DIMENSIONES_FLOTA = (
    ((42, 18), 1164),
    ((45, 18), 344),
    ((46, 18), 230),
    ((47, 19), 26),
    ((49, 18), 11),
    ((49, 19), 47),
    ((51, 19), 16),
)


# =============================================================================
# CONFIGURACIÓN
# =============================================================================

Punto = Tuple[float, float]


@dataclass(frozen=True)
class RutaConfig:
    station_id: int
    waypoints: Tuple[Punto, ...]
    speed: float
    station_type: int = int(StationType.PASSENGER_CAR)
    vehicle_length: int = 42
    vehicle_width: int = 18


@dataclass(frozen=True)
class DenmConfig:
    station_id: int
    cause_code: int
    sub_cause_code: int = 0
    repeat: int = 1
    start: float = 0.0
    interval: float = 1.0
    sequence_number: int = 0


@dataclass(frozen=True)
class InterseccionConfig:
    station_id: int
    intersection_id: int
    position: Punto
    n_signal_groups: int = 4
    cycle: float = 60.0
    spat_interval: float = 1.0
    map_interval: float = 1.0


@dataclass(frozen=True)
class EgoConfig:
    waypoints: Tuple[Punto, ...]
    speed: float = 10.0
    gnss_hz: float = 1.0


@dataclass(frozen=True)
class SimConfig:
    n_stations: int = 0
    routes: Tuple[RutaConfig, ...] = ()
    denm_events: Tuple[DenmConfig, ...] = ()
    intersections: Tuple[InterseccionConfig, ...] = ()
    ego: Optional[EgoConfig] = None
    duration: float = 60.0
    seed: int = 0
    start_unix_ns: int = INICIO_POR_DEFECTO_NS

    @classmethod
    def desde_dict(cls, datos: dict) -> "SimConfig":
        """
        Construye la configuración desde JSON

        Raises:
            ConfigError: Claves desconocidas, tipos o valores inválidos
        """
        config = _construir(cls, datos, "simulate")
        config.comprobar()
        return config

    def comprobar(self) -> None:
        if self.duration <= 0:
            raise ConfigError("simulate.duration debe ser > 0")
        if self.n_stations < 0:
            raise ConfigError("simulate.n_stations debe ser >= 0")
        ids = [r.station_id for r in self.routes] + [i.station_id for i in self.intersections]
        if len(ids) != len(set(ids)):
            raise ConfigError("simulate: station_id repetido entre routes/intersections")
        for i, ruta in enumerate(self.routes):
            if not ruta.waypoints:
                raise ConfigError(f"simulate.routes[{i}].waypoints: se necesita al menos un punto")
            if ruta.speed < 0:
                raise ConfigError(f"simulate.routes[{i}].speed debe ser >= 0")
        for i, evento in enumerate(self.denm_events):
            if evento.repeat < 1 or evento.interval <= 0 or evento.start < 0:
                raise ConfigError(f"simulate.denm_events[{i}]: repeat >= 1, interval > 0, start >= 0")
        for i, inter in enumerate(self.intersections):
            if not 1 <= inter.n_signal_groups <= 32:
                raise ConfigError(f"simulate.intersections[{i}].n_signal_groups debe estar en [1, 32]")
            if inter.cycle / inter.n_signal_groups <= AMBAR_S:
                raise ConfigError(f"simulate.intersections[{i}].cycle demasiado corto")
            if inter.spat_interval <= 0 or inter.map_interval <= 0:
                raise ConfigError(f"simulate.intersections[{i}]: intervalos > 0")
        if self.ego is not None and (not self.ego.waypoints or self.ego.gnss_hz <= 0):
            raise ConfigError("simulate.ego: waypoints y gnss_hz > 0")


def _valor(tipo, valor, path: str):
    origen = typing.get_origin(tipo)
    if origen is typing.Union:
        if valor is None:
            return None
        tipo = next(a for a in typing.get_args(tipo) if a is not type(None))
        return _valor(tipo, valor, path)
    if origen is tuple:
        if not isinstance(valor, list):
            raise ConfigError(f"{path}: se esperaba una lista")
        args = typing.get_args(tipo)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_valor(args[0], v, f"{path}[{i}]") for i, v in enumerate(valor))
        if len(valor) != len(args):
            raise ConfigError(f"{path}: se esperaban {len(args)} elementos")
        return tuple(_valor(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, valor)))
    if dataclasses.is_dataclass(tipo):
        return _construir(tipo, valor, path)
    if isinstance(valor, bool):
        raise ConfigError(f"{path}: tipo incorrecto (bool)")
    if tipo is float and isinstance(valor, (int, float)):
        return float(valor)
    if tipo is int and isinstance(valor, int):
        return valor
    raise ConfigError(f"{path}: se esperaba {tipo.__name__}, no {type(valor).__name__}")


def _construir(cls, datos, path: str):
    if not isinstance(datos, dict):
        raise ConfigError(f"{path}: se esperaba un objeto")
    campos = {f.name: f for f in dataclasses.fields(cls)}
    for clave in datos:
        if clave not in campos:
            raise ConfigError(f"clave desconocida: {path}.{clave}")
    tipos = typing.get_type_hints(cls)
    argumentos = {}
    for nombre, f in campos.items():
        if nombre in datos:
            argumentos[nombre] = _valor(tipos[nombre], datos[nombre], f"{path}.{nombre}")
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"falta la clave {path}.{nombre}")
    return cls(**argumentos)


def cargar_config_sim(ruta) -> SimConfig:
    with open(ruta, "r", encoding="utf-8") as f:
        try:
            datos = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{ruta}: JSON inválido: {e}") from None
    return SimConfig.desde_dict(datos)


# =============================================================================
# GEOMETRÍA
# =============================================================================

def rumbo(a: Punto, b: Punto) -> float:
    """Rumbo inicial de a hacia b, en grados [0, 360)"""
    lat1, lon1, lat2, lon2 = map(math.radians, (a[0], a[1], b[0], b[1]))
    dlon = lon2 - lon1
    x = math.sin(dlon) * math.cos(lat2)
    y = math.cos(lat1) * math.sin(lat2) - math.sin(lat1) * math.cos(lat2) * math.cos(dlon)
    return math.degrees(math.atan2(x, y)) % 360.0


def destino(origen: Punto, rumbo_grados: float, distancia_m: float) -> Punto:
    lat1, lon1 = math.radians(origen[0]), math.radians(origen[1])
    theta = math.radians(rumbo_grados)
    delta = distancia_m / RADIO_TIERRA_M
    lat2 = math.asin(math.sin(lat1) * math.cos(delta) + math.cos(lat1) * math.sin(delta) * math.cos(theta))
    lon2 = lon1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(lat1),
        math.cos(delta) - math.sin(lat1) * math.sin(lat2),
    )
    return math.degrees(lat2), (math.degrees(lon2) + 540.0) % 360.0 - 180.0


def _vector(p: Punto) -> Tuple[float, float, float]:
    lat, lon = math.radians(p[0]), math.radians(p[1])
    return math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)


def interpolar(a: Punto, b: Punto, fraccion: float) -> Punto:
    """Punto del círculo máximo entre a y b"""
    va, vb = _vector(a), _vector(b)
    producto = max(-1.0, min(1.0, sum(x * y for x, y in zip(va, vb))))
    omega = math.acos(producto)
    if omega < 1e-12:
        return a
    ka = math.sin((1 - fraccion) * omega) / math.sin(omega)
    kb = math.sin(fraccion * omega) / math.sin(omega)
    x, y, z = (ka * p + kb * q for p, q in zip(va, vb))
    return math.degrees(math.atan2(z, math.hypot(x, y))), math.degrees(math.atan2(y, x))


def diferencia_angular(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


class Ruta:
    """Polilínea de waypoints recorrida por círculos máximos"""

    def __init__(self, waypoints: Sequence[Punto]):
        self.puntos = [tuple(p) for p in waypoints]
        self.longitudes = [haversine(a, b) for a, b in zip(self.puntos, self.puntos[1:])]
        self.acumulado = [0.0]
        for longitud in self.longitudes:
            self.acumulado.append(self.acumulado[-1] + longitud)
        self.total = self.acumulado[-1]
        self.rumbos = [rumbo(a, b) for a, b in zip(self.puntos, self.puntos[1:])]

    def _tramo(self, s: float) -> int:
        return min(max(bisect.bisect_right(self.acumulado, s) - 1, 0), len(self.longitudes) - 1)

    def posicion(self, s: float) -> Punto:
        if not self.longitudes:
            return self.puntos[0]
        s = min(max(s, 0.0), self.total)
        i = self._tramo(s)
        if self.longitudes[i] == 0:
            return self.puntos[i]
        return interpolar(self.puntos[i], self.puntos[i + 1], (s - self.acumulado[i]) / self.longitudes[i])

    def rumbo(self, s: float) -> float:
        if not self.rumbos:
            return 0.0
        return self.rumbos[self._tramo(min(max(s, 0.0), self.total))]


# =============================================================================
# RESULTADO
# =============================================================================

@dataclass
class GroundTruth:
    distancias: Dict[int, float] = field(default_factory=dict)
    conteos: Dict[str, int] = field(default_factory=lambda: {"cam": 0, "denm": 0, "spatem": 0, "mapem": 0})
    estaciones_unicas: int = 0
    eventos: List[dict] = field(default_factory=list)
    ego_distance_m: float = 0.0

    def a_dict(self) -> dict:
        return {
            "distances_m": {str(k): v for k, v in sorted(self.distancias.items())},
            "counts": dict(self.conteos),
            "unique_stations": self.estaciones_unicas,
            "events": list(self.eventos),
            "ego_distance_m": self.ego_distance_m,
        }


@dataclass
class Simulacion:
    config: SimConfig
    mensajes: List[Tuple[int, ItsMessage]]
    gnss: List[GnssFix]
    ground_truth: GroundTruth


def guardar_ground_truth(gt: GroundTruth, ruta) -> Path:
    ruta = Path(ruta)
    with open(ruta, "w", encoding="utf-8") as f:
        json.dump(gt.a_dict(), f, indent=2, ensure_ascii=False)
    logger.info(f"💾 Verdad de referencia guardada en: {ruta}")
    return ruta


# =============================================================================
# GENERACIÓN
# =============================================================================

def _wire_pos(p: Punto) -> Tuple[int, int]:
    return round(p[0] * 1e7), round(p[1] * 1e7)


def _posicion_ref(p: Punto, confianza: int, orientacion: int) -> ReferencePosition:
    lat, lon = _wire_pos(p)
    return ReferencePosition(
        latitude=lat,
        longitude=lon,
        altitude_value=20000,
        semi_major_confidence=confianza,
        semi_minor_confidence=confianza,
        semi_major_orientation=orientacion,
    )


def _estaciones_generadas(config: SimConfig, rng: random.Random) -> List[RutaConfig]:
    usados = {r.station_id for r in config.routes} | {i.station_id for i in config.intersections}
    siguiente = 1000
    generadas = []
    pares = [par for par, _ in DIMENSIONES_FLOTA]
    pesos = [peso for _, peso in DIMENSIONES_FLOTA]
    for _ in range(max(0, config.n_stations - len(config.routes))):
        while siguiente in usados:
            siguiente += 1
        usados.add(siguiente)
        inicio = (
            CENTRO_AACHEN[0] + rng.uniform(-0.02, 0.02),
            CENTRO_AACHEN[1] + rng.uniform(-0.03, 0.03),
        )
        velocidad = 0.0 if rng.random() < 0.1 else round(rng.uniform(1.0, 30.0), 2)
        fin = destino(inicio, rng.uniform(0.0, 360.0), velocidad * config.duration + 100.0)
        longitud, anchura = rng.choices(pares, weights=pesos)[0]
        generadas.append(RutaConfig(
            station_id=siguiente,
            waypoints=(inicio, fin) if velocidad > 0 else (inicio,),
            speed=velocidad,
            station_type=int(StationType.PASSENGER_CAR),
            vehicle_length=longitud,
            vehicle_width=anchura,
        ))
    return generadas


class _Vehiculo:
    """Estado cinemático de una estación que recorre su ruta a velocidad constante"""

    def __init__(self, cfg: RutaConfig):
        self.cfg = cfg
        self.ruta = Ruta(cfg.waypoints)
        self.v = cfg.speed if self.ruta.total > 0 else 0.0
        self.llegada_ms = self.ruta.total / self.v * 1000 if self.v > 0 else 0.0

    def s(self, t_ms: int) -> float:
        return min(self.v * t_ms / 1000, self.ruta.total) if self.v > 0 else 0.0

    def velocidad(self, t_ms: int) -> float:
        return self.v if self.v > 0 and t_ms < self.llegada_ms else 0.0

    def siguiente_cam(self, t: int, s: float, rumbo_cam: float, velocidad_cam: float) -> int:
        """Primer instante (ms) en que se cumple alguna regla de disparo"""
        candidatos = [t + INTERVALO_MAX_MS]
        if self.velocidad(t) > 0:
            t_pos = t + math.ceil(UMBRAL_POSICION_M * 1000 / self.v - 1e-9)
            if self.s(t_pos) - s >= UMBRAL_POSICION_M - 1e-9:
                candidatos.append(t_pos)
            t_llegada = math.ceil(self.llegada_ms)
            if t_llegada > t and velocidad_cam > UMBRAL_VELOCIDAD_MS:
                candidatos.append(t_llegada)
            for k in range(1, len(self.ruta.puntos) - 1):
                if self.ruta.acumulado[k] <= s:
                    continue
                if diferencia_angular(self.ruta.rumbos[k], rumbo_cam) > UMBRAL_RUMBO_GRADOS:
                    candidatos.append(math.ceil(self.ruta.acumulado[k] / self.v * 1000))
                    break
        return max(min(candidatos), t + INTERVALO_MIN_MS)


def _generar_cams(cfg: RutaConfig, duracion_ms: int, inicio_ns: int, rng: random.Random):
    """Lista de (t_ms, Cam) y distancia recorrida entre el primer y el último CAM"""
    vehiculo = _Vehiculo(cfg)
    confianza = rng.randint(100, 500)
    t = rng.randrange(0, INTERVALO_MAX_MS)
    cams = []
    historial: List[Tuple[int, int]] = []
    ultimo_lf: Optional[int] = None
    s_primero = s_ultimo = 0.0

    while t < duracion_ms:
        s = vehiculo.s(t)
        rumbo_actual = vehiculo.ruta.rumbo(s)
        velocidad = vehiculo.velocidad(t)
        posicion = vehiculo.ruta.posicion(s)
        lat, lon = _wire_pos(posicion)
        rumbo_wire = round(rumbo_actual * 10) % 3600

        baja = None
        if ultimo_lf is None or t - ultimo_lf >= INTERVALO_BAJA_FRECUENCIA_MS:
            deltas = []
            referencia = (lat, lon)
            for previo in reversed(historial[-MAX_HISTORIAL:]):
                d = DeltaPosition(previo[0] - referencia[0], previo[1] - referencia[1])
                if abs(d.delta_latitude) > 131071 or abs(d.delta_longitude) > 131071:
                    break
                deltas.append(d)
                referencia = previo
            baja = LowFrequencyContainer(vehicle_role=0, exterior_lights=0, path_history=tuple(deltas))
            ultimo_lf = t

        unix_ns = inicio_ns + t * MS
        cam = Cam(
            header=ItsPduHeader(PROTOCOLO, int(MessageId.CAM), cfg.station_id),
            generation_delta_time=generation_delta_time(timestamp_its(unix_ns)),
            basic=BasicContainer(
                station_type=cfg.station_type,
                reference_position=_posicion_ref(posicion, confianza, rumbo_wire),
            ),
            high_frequency=HighFrequencyContainer(
                heading=rumbo_wire,
                speed=round(velocidad * 100),
                drive_direction=DriveDirection.FORWARD,
                vehicle_length=cfg.vehicle_length,
                vehicle_width=cfg.vehicle_width,
                longitudinal_acceleration=0,
                curvature=0,
                yaw_rate=0,
            ),
            low_frequency=baja,
        )
        if not cams:
            s_primero = s
        s_ultimo = s
        cams.append((t, cam))
        historial.append((lat, lon))
        t = vehiculo.siguiente_cam(t, s, rumbo_actual, velocidad)

    return cams, s_ultimo - s_primero


def _posicion_estacion(station_id: int, rutas: Dict[int, RutaConfig], inters: Dict[int, InterseccionConfig],
                       t_ms: int, rng: random.Random) -> Punto:
    if station_id in rutas:
        vehiculo = _Vehiculo(rutas[station_id])
        return vehiculo.ruta.posicion(vehiculo.s(t_ms))
    if station_id in inters:
        return inters[station_id].position
    return CENTRO_AACHEN[0] + rng.uniform(-0.01, 0.01), CENTRO_AACHEN[1] + rng.uniform(-0.01, 0.01)


def _tipo_estacion(station_id: int, rutas: Dict[int, RutaConfig], inters: Dict[int, InterseccionConfig]) -> int:
    if station_id in rutas:
        return rutas[station_id].station_type
    if station_id in inters:
        return int(StationType.ROAD_SIDE_UNIT)
    return int(StationType.PASSENGER_CAR)


def _generar_denms(evento: DenmConfig, duracion_ms: int, inicio_ns: int, posicion: Punto, tipo: int):
    inicio_ms = round(evento.start * 1000)
    deteccion = timestamp_its(inicio_ns + inicio_ms * MS)
    denms = []
    for k in range(evento.repeat):
        t = inicio_ms + round(k * evento.interval * 1000)
        if t >= duracion_ms:
            break
        denms.append((t, Denm(
            header=ItsPduHeader(PROTOCOLO, int(MessageId.DENM), evento.station_id),
            management=ManagementContainer(
                action_id=ActionId(evento.station_id, evento.sequence_number),
                detection_time=deteccion,
                reference_time=timestamp_its(inicio_ns + t * MS),
                event_position=_posicion_ref(posicion, 500, 3601),
                validity_duration=600,
                station_type=tipo,
            ),
            situation=SituationContainer(
                information_quality=3,
                event_type=EventType(evento.cause_code, evento.sub_cause_code),
            ),
        )))
    return denms


def estado_semaforo(inter: InterseccionConfig, grupo: int, t_s: float) -> Tuple[MovementPhaseState, float]:
    """
    Estado de un grupo semafórico en el plan de tiempo fijo

    Returns:
        (estado, segundos desde el inicio hasta el próximo cambio)
    """
    ranura = inter.cycle / inter.n_signal_groups
    ciclo = math.floor(t_s / inter.cycle)
    en_ciclo = t_s - ciclo * inter.cycle
    inicio_verde = grupo * ranura
    fin_verde = inicio_verde + ranura - AMBAR_S
    fin_ambar = inicio_verde + ranura
    base = ciclo * inter.cycle
    if inicio_verde <= en_ciclo < fin_verde:
        return MovementPhaseState.PROTECTED_MOVEMENT_ALLOWED, base + fin_verde
    if fin_verde <= en_ciclo < fin_ambar:
        return MovementPhaseState.PROTECTED_CLEARANCE, base + fin_ambar
    siguiente = base + inicio_verde if en_ciclo < inicio_verde else base + inter.cycle + inicio_verde
    return MovementPhaseState.STOP_AND_REMAIN, siguiente


def _generar_spatems(inter: InterseccionConfig, duracion_ms: int, inicio_ns: int):
    paso = round(inter.spat_interval * 1000)
    mensajes = []
    for t in range(0, duracion_ms, paso):
        movimientos = []
        for g in range(inter.n_signal_groups):
            estado, cambio_s = estado_semaforo(inter, g, t / 1000)
            cambio_ns = inicio_ns + round(cambio_s * NS)
            movimientos.append(MovementState(
                signal_group=g + 1,
                event_state=estado,
                min_end_time=(cambio_ns // (NS // 10)) % 36000,
            ))
        mensajes.append((t, Spatem(
            header=ItsPduHeader(PROTOCOLO, int(MessageId.SPATEM), inter.station_id),
            intersections=(IntersectionState(inter.intersection_id, 1, tuple(movimientos)),),
        )))
    return mensajes


def geometria_interseccion(inter: InterseccionConfig) -> IntersectionGeometry:
    """Un carril de entrada por grupo semafórico más su carril de salida"""
    carriles = []
    for g in range(inter.n_signal_groups):
        angulo = math.radians(g * 360.0 / inter.n_signal_groups)
        dx, dy = math.sin(angulo), math.cos(angulo)
        entrada = 2 * g + 1
        salida = 2 * g + 2
        carriles.append(GenericLane(
            lane_id=entrada,
            ingress=True,
            node_offsets=(NodeOffset(round(3000 * dx), round(3000 * dy)), NodeOffset(round(500 * dx), round(500 * dy))),
            connects_to=(Connection(lane_id=salida, signal_group=g + 1),),
        ))
        carriles.append(GenericLane(
            lane_id=salida,
            ingress=False,
            node_offsets=(NodeOffset(round(-500 * dx), round(-500 * dy)), NodeOffset(round(-3000 * dx), round(-3000 * dy))),
        ))
    return IntersectionGeometry(
        intersection_id=inter.intersection_id,
        ref_point=_posicion_ref(inter.position, 100, 3601),
        lanes=tuple(carriles),
    )


def _generar_mapems(inter: InterseccionConfig, duracion_ms: int):
    paso = round(inter.map_interval * 1000)
    geometria = geometria_interseccion(inter)
    mapem = Mapem(
        header=ItsPduHeader(PROTOCOLO, int(MessageId.MAPEM), inter.station_id),
        intersections=(geometria,),
    )
    return [(t, mapem) for t in range(0, duracion_ms, paso)]


def _generar_gnss(ego: EgoConfig, duracion_ms: int, inicio_ns: int) -> Tuple[List[GnssFix], float]:
    vehiculo = _Vehiculo(RutaConfig(station_id=0, waypoints=ego.waypoints, speed=ego.speed))
    paso = 1000 / ego.gnss_hz
    fixes = []
    k = 0
    while round(k * paso) < duracion_ms:
        t = round(k * paso)
        lat, lon = vehiculo.ruta.posicion(vehiculo.s(t))
        fixes.append(GnssFix(inicio_ns + t * MS, lat, lon, 200.0))
        k += 1
    distancia = vehiculo.s(round((k - 1) * paso)) if fixes else 0.0
    return fixes, distancia


def _comprobar_mensaje(msg: ItsMessage) -> None:
    violaciones = validate(msg)
    if violaciones:
        detalle = "; ".join(f"{v.path}: {v.reason}" for v in violaciones)
        raise ConfigError(f"la configuración produce un {message_type_name(msg)} inválido: {detalle}")


def simulate(config: SimConfig) -> Simulacion:
    """
    Genera el flujo completo de mensajes y la verdad de referencia

    Args:
        config: Configuración de la simulación

    Returns:
        Simulacion con mensajes (ts Unix ns, mensaje) ordenados por tiempo,
        traza GNSS propia y GroundTruth

    Raises:
        ConfigError: Configuración inválida o que produce mensajes inválidos
    """
    config.comprobar()
    rng = random.Random(config.seed)
    duracion_ms = round(config.duration * 1000)
    inicio = config.start_unix_ns
    rutas = list(config.routes) + _estaciones_generadas(config, rng)
    por_id = {r.station_id: r for r in rutas}
    inters = {i.station_id: i for i in config.intersections}

    gt = GroundTruth()
    flujos: List[List[Tuple[int, ItsMessage]]] = []

    for ruta in rutas:
        cams, distancia = _generar_cams(ruta, duracion_ms, inicio, rng)
        flujos.append(cams)
        if cams:
            gt.distancias[ruta.station_id] = distancia

    for evento in config.denm_events:
        posicion = _posicion_estacion(evento.station_id, por_id, inters, round(evento.start * 1000), rng)
        tipo = _tipo_estacion(evento.station_id, por_id, inters)
        denms = _generar_denms(evento, duracion_ms, inicio, posicion, tipo)
        flujos.append(denms)
        gt.eventos.append({
            "station_id": evento.station_id,
            "sequence_number": evento.sequence_number,
            "cause_code": evento.cause_code,
            "sub_cause_code": evento.sub_cause_code,
            "n_msgs": len(denms),
        })

    for inter in config.intersections:
        flujos.append(_generar_spatems(inter, duracion_ms, inicio))
        flujos.append(_generar_mapems(inter, duracion_ms))

    ordenados = sorted(
        ((t, orden, n, msg) for orden, flujo in enumerate(flujos) for n, (t, msg) in enumerate(flujo)),
        key=lambda x: (x[0], x[1], x[2]),
    )
    mensajes = []
    estaciones = set()
    for t, _, _, msg in ordenados:
        _comprobar_mensaje(msg)
        mensajes.append((inicio + t * MS, msg))
        gt.conteos[message_type_name(msg)] += 1
        estaciones.add(msg.header.station_id)
    gt.estaciones_unicas = len(estaciones)

    gnss: List[GnssFix] = []
    if config.ego is not None:
        gnss, gt.ego_distance_m = _generar_gnss(config.ego, duracion_ms, inicio)

    logger.info(
        f"🚦 Simulación: {len(mensajes)} mensajes de {gt.estaciones_unicas} estaciones en "
        f"{config.duration:.0f} s ({', '.join(f'{k}={v}' for k, v in gt.conteos.items())})"
    )
    return Simulacion(config, mensajes, gnss, gt)


# =============================================================================
# SALIDAS
# =============================================================================

def emitir_udp(
    sim: Simulacion,
    destino_v2x: Direccion,
    realtime: bool = False,
    destino_gnss: Optional[Direccion] = None,
    lote: int = 0,
    esperar: Optional[Callable[[int], None]] = None,
) -> int:
    """
    Envía la simulación por UDP

    Args:
        sim: Resultado de ``simulate``
        destino_v2x: Dirección del gateway
        realtime: Respeta los tiempos simulados; si no, lo más rápido posible
        destino_gnss: Receptor GNSS (JSON {"lat", "lng", "alt"}), opcional
        lote: Si > 0, tras cada ``lote`` mensajes se llama a ``esperar(enviados)``
        esperar: Control de flujo del llamador

    Returns:
        Número de datagramas V2X enviados
    """
    eventos: List[Tuple[int, int, object]] = [(ts, 1, msg) for ts, msg in sim.mensajes]
    if destino_gnss is not None:
        eventos += [(fix.ts, 0, fix) for fix in sim.gnss]
        eventos.sort(key=lambda e: (e[0], e[1]))

    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    enviados = 0
    t0_sim = eventos[0][0] if eventos else 0
    t0_real = time.monotonic()
    try:
        for ts, es_v2x, item in eventos:
            if realtime:
                espera = (ts - t0_sim) / NS - (time.monotonic() - t0_real)
                if espera > 0:
                    time.sleep(espera)
            if es_v2x:
                sock.sendto(encode_message(item), destino_v2x)
                enviados += 1
                if lote and esperar and enviados % lote == 0:
                    esperar(enviados)
            else:
                datos = json.dumps({"lat": item.lat, "lng": item.lon, "alt": item.alt})
                sock.sendto(datos.encode("utf-8"), destino_gnss)
    finally:
        sock.close()
    if lote and esperar and enviados % lote:
        esperar(enviados)
    logger.info(f"📤 {enviados} mensajes enviados a {destino_v2x[0]}:{destino_v2x[1]}")
    return enviados


def grabar_offline(
    sim: Simulacion,
    carpeta,
    recorder_config: Optional[RecorderConfig] = None,
    tick_s: float = 1.0,
    posicion_fija: Optional[Tuple[float, float, float]] = None,
) -> List[Path]:
    """
    Pasa la simulación por el grabador con el reloj simulado

    Cada mensaje se codifica y se decodifica como si llegara por UDP.

    Returns:
        Archivos de escenario escritos
    """
    config = recorder_config or RecorderConfig()
    grabador = Grabador(carpeta, config, posicion_fija=posicion_fija)
    inicio = sim.config.start_unix_ns
    fin = inicio + round(sim.config.duration * NS)
    paso = round(tick_s * NS)

    entradas: List[Tuple[int, int, object]] = [(fix.ts, 0, Gnss(fix)) for fix in sim.gnss]
    for ts, msg in sim.mensajes:
        evento = handle_datagram(encode_message(msg), ts, ("127.0.0.1", 0))
        entradas.append((ts, 1, V2x(evento)))
    entradas += [(ts, 2, Tick(ts)) for ts in range(inicio + paso, fin + 1, paso)]
    entradas.sort(key=lambda e: (e[0], e[1]))

    for _, _, entrada in entradas:
        if isinstance(entrada, Tick):
            grabador.tick(entrada.ts)
        else:
            grabador.procesar(entrada)
    grabador.cerrar(fin)
    return grabador.archivos
