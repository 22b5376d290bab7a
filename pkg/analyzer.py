"""
ANÁLISIS DE DATASETS V2X
========================
Estadísticas clave por categoría, tabla de eventos DENM, histograma de
dimensiones de vehículos y trayectorias CAM en GeoJSON.

Un dataset es un directorio con archivos .v2x.json (recursivo).
"""

import csv
import json
import logging
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, TextIO, Tuple, Union

from dataset_io import NS, ScenarioRecording, cargar_escenario, listar_escenarios, trim
from errores import EmptyDataset
from its_types import RANGOS, Cam, Denm, MessageId, StationType
from recorder import haversine

logger = logging.getLogger(__name__)

GAP_S = 2.0
SALTO_M = 200.0

LONGITUD_NO_DISPONIBLE = RANGOS["vehicle_length"][1]
ANCHURA_NO_DISPONIBLE = RANGOS["vehicle_width"][1]
LAT_NO_DISPONIBLE = RANGOS["latitude"][1]
LON_NO_DISPONIBLE = RANGOS["longitude"][1]

NOMBRES_CAUSA = {
    1: "Traffic Condition",
    94: "Stationary vehicle",
    99: "Dangerous situation",
}
NOMBRES_SUBCAUSA = {
    0: "Unavailable",
    1: "Emergency brake",
    5: "AEB activated",
}


# =============================================================================
# CARGA
# =============================================================================

class Escenario(NamedTuple):
    ruta: Optional[Path]
    grabacion: ScenarioRecording
    categoria: str


Categorizador = Callable[[Path, ScenarioRecording], str]


def categoria_por_defecto(raiz: Path) -> Categorizador:
    """meta.category, si no el directorio relativo a la raíz, si no 'default'"""

    def categorizar(ruta: Path, rec: ScenarioRecording) -> str:
        if rec.meta.category:
            return rec.meta.category
        relativo = ruta.parent.relative_to(raiz).as_posix()
        return "default" if relativo in ("", ".") else relativo

    return categorizar


def cargar_dataset(
    raiz,
    categorizar: Optional[Categorizador] = None,
    verificar: bool = False,
) -> List[Escenario]:
    """
    Lee todos los escenarios de un directorio

    Args:
        raiz: Directorio del dataset
        categorizar: Regla de categoría; por defecto ``categoria_por_defecto``
        verificar: Re-decodifica cada payload al leer

    Returns:
        Escenarios ordenados por ruta
    """
    raiz = Path(raiz)
    categorizar = categorizar or categoria_por_defecto(raiz)
    escenarios = []
    for ruta in listar_escenarios(raiz):
        rec = cargar_escenario(ruta, verificar=verificar)
        escenarios.append(Escenario(ruta, rec, categorizar(ruta, rec)))
    logger.info(f"📂 {len(escenarios)} escenarios leídos de {raiz}")
    return escenarios


Dataset = Union[str, os.PathLike, Sequence[Escenario]]


def _escenarios(dataset: Dataset) -> List[Escenario]:
    if isinstance(dataset, (str, os.PathLike)):
        return cargar_dataset(dataset)
    return list(dataset)


def _cams(escenarios: Iterable[Escenario]):
    for esc in escenarios:
        for msg in esc.grabacion.messages:
            if isinstance(msg.decoded, Cam):
                yield msg.recv_ts, msg.decoded


def _posicion(cam: Cam) -> Optional[Tuple[float, float]]:
    pos = cam.basic.reference_position
    if pos.latitude == LAT_NO_DISPONIBLE or pos.longitude == LON_NO_DISPONIBLE:
        return None
    return pos.latitude * 1e-7, pos.longitude * 1e-7


# =============================================================================
# SEGMENTOS CAM
# =============================================================================

@dataclass
class Segmento:
    station_id: int
    station_type: int
    puntos: List[Tuple[int, float, float]] = field(default_factory=list)  # (ts, lat, lon)

    @property
    def distancia_m(self) -> float:
        return sum(
            haversine((a[1], a[2]), (b[1], b[2])) for a, b in zip(self.puntos, self.puntos[1:])
        )


def segmentos_cam(
    escenarios: Iterable[Escenario],
    gap_s: float = GAP_S,
    salto_m: float = SALTO_M,
) -> List[Segmento]:
    """
    Trayectorias contiguas por estación

    Se corta cuando entre dos CAM consecutivos pasan más de ``gap_s`` segundos
    o hay un salto de más de ``salto_m`` metros.
    """
    por_estacion: Dict[int, List[Tuple[int, Cam]]] = defaultdict(list)
    for ts, cam in _cams(escenarios):
        por_estacion[cam.header.station_id].append((ts, cam))

    segmentos = []
    gap_ns = round(gap_s * NS)
    for estacion in sorted(por_estacion):
        actual: Optional[Segmento] = None
        for ts, cam in sorted(por_estacion[estacion], key=lambda par: par[0]):
            posicion = _posicion(cam)
            if posicion is None:
                continue
            if actual is not None:
                ts_previo, lat_previa, lon_previa = actual.puntos[-1]
                if ts - ts_previo > gap_ns or haversine((lat_previa, lon_previa), posicion) > salto_m:
                    segmentos.append(actual)
                    actual = None
            if actual is None:
                actual = Segmento(estacion, cam.basic.station_type)
            actual.puntos.append((ts, posicion[0], posicion[1]))
        if actual is not None:
            segmentos.append(actual)
    return segmentos


def distancias_cam_por_estacion(dataset: Dataset, gap_s: float = GAP_S, salto_m: float = SALTO_M) -> Dict[int, float]:
    """Metros recorridos por cada estación según sus CAM"""
    distancias: Dict[int, float] = defaultdict(float)
    for seg in segmentos_cam(_escenarios(dataset), gap_s, salto_m):
        distancias[seg.station_id] += seg.distancia_m
    return dict(distancias)


# =============================================================================
# ESTADÍSTICAS
# =============================================================================

@dataclass
class FilaEstadisticas:
    n_cam: int = 0
    n_denm: int = 0
    n_mapem: int = 0
    n_spatem: int = 0
    n_unique_stations: int = 0
    ego_distance_km: float = 0.0
    cam_distance_km: float = 0.0
    total_duration_h: float = 0.0
    v2x_duration_h: float = 0.0
    context_duration_h: float = 0.0

    def sumar(self, otra: "FilaEstadisticas") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(otra, f.name))

    def a_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class StatsReport:
    categorias: Dict[str, FilaEstadisticas]
    total: FilaEstadisticas

    def a_dict(self) -> dict:
        return {
            "categorias": {nombre: fila.a_dict() for nombre, fila in self.categorias.items()},
            "total": self.total.a_dict(),
        }


_CONTADOR_POR_ID = {
    MessageId.CAM: "n_cam",
    MessageId.DENM: "n_denm",
    MessageId.MAPEM: "n_mapem",
    MessageId.SPATEM: "n_spatem",
}


def _estaciones(escenarios: Iterable[Escenario]) -> set:
    return {
        msg.decoded.header.station_id
        for esc in escenarios
        for msg in esc.grabacion.messages
        if msg.decoded is not None
    }


def _fila(escenarios: List[Escenario], gap_s: float, salto_m: float, lead_s: float, trail_s: float) -> FilaEstadisticas:
    fila = FilaEstadisticas()
    for esc in escenarios:
        rec = esc.grabacion
        for msg in rec.messages:
            if msg.decoded is None:
                continue
            contador = _CONTADOR_POR_ID[msg.decoded.header.message_id]
            setattr(fila, contador, getattr(fila, contador) + 1)
        fila.ego_distance_km += sum(
            haversine((a.lat, a.lon), (b.lat, b.lon)) for a, b in zip(rec.gnss, rec.gnss[1:])
        ) / 1000
        fila.total_duration_h += (rec.meta.end_ts - rec.meta.start_ts) / NS / 3600
        fila.v2x_duration_h += sum(
            t.meta.end_ts - t.meta.start_ts for t in trim(rec, lead_s, trail_s)
        ) / NS / 3600
        fila.context_duration_h += sum(v.end_ts - v.start_ts for v in rec.context_windows) / NS / 3600
    fila.n_unique_stations = len(_estaciones(escenarios))
    fila.cam_distance_km = sum(seg.distancia_m for seg in segmentos_cam(escenarios, gap_s, salto_m)) / 1000
    return fila


def stats(
    dataset: Dataset,
    categorizar: Optional[Categorizador] = None,
    gap_s: float = GAP_S,
    salto_m: float = SALTO_M,
    lead_s: float = 1.0,
    trail_s: float = 1.0,
) -> StatsReport:
    """
    Estadísticas clave por categoría y totales

    Args:
        dataset: Directorio o escenarios ya cargados
        categorizar: Regla de categoría (solo cuando dataset es un directorio)

    Raises:
        EmptyDataset: Si no hay escenarios
    """
    if isinstance(dataset, (str, os.PathLike)):
        escenarios = cargar_dataset(dataset, categorizar)
    else:
        escenarios = list(dataset)
    if not escenarios:
        raise EmptyDataset("el dataset no contiene escenarios")

    grupos: Dict[str, List[Escenario]] = defaultdict(list)
    for esc in sorted(escenarios, key=lambda e: (e.categoria, str(e.ruta), e.grabacion.meta.start_ts)):
        grupos[esc.categoria].append(esc)

    categorias = {nombre: _fila(grupos[nombre], gap_s, salto_m, lead_s, trail_s) for nombre in sorted(grupos)}
    total = FilaEstadisticas()
    for fila in categorias.values():
        total.sumar(fila)
    # una estación vista en varias categorías cuenta una vez
    total.n_unique_stations = len(_estaciones(escenarios))
    return StatsReport(categorias, total)


# =============================================================================
# EVENTOS DENM
# =============================================================================

@dataclass(frozen=True)
class FilaDenm:
    cause_code: Optional[int]
    cause_name: str
    sub_cause_code: Optional[int]
    sub_cause_name: str
    n_msgs: int
    n_stations: int
    n_events: int

    @property
    def nombre(self) -> str:
        return f"{self.cause_name} / {self.sub_cause_name}"


def nombre_causa(causa: Optional[int]) -> str:
    if causa is None:
        return "n/a"
    return NOMBRES_CAUSA.get(causa, str(causa))


def nombre_subcausa(subcausa: Optional[int]) -> str:
    """El nombre depende solo del subCauseCode, sea cual sea la causa"""
    if subcausa is None:
        return "n/a"
    return NOMBRES_SUBCAUSA.get(subcausa, str(subcausa))


def denm_events(dataset: Dataset) -> List[FilaDenm]:
    """
    Agrupa los DENM por (causeCode, subCauseCode)

    n_events cuenta action_id distintos; los DENM sin contenedor de situación
    forman su propio grupo (códigos None).
    """
    mensajes: Counter = Counter()
    estaciones: Dict[tuple, set] = defaultdict(set)
    eventos: Dict[tuple, set] = defaultdict(set)
    for esc in _escenarios(dataset):
        for msg in esc.grabacion.messages:
            denm = msg.decoded
            if not isinstance(denm, Denm):
                continue
            situacion = denm.situation
            clave = (
                (situacion.event_type.cause_code, situacion.event_type.sub_cause_code)
                if situacion is not None else (None, None)
            )
            mensajes[clave] += 1
            estaciones[clave].add(denm.header.station_id)
            accion = denm.management.action_id
            eventos[clave].add((accion.originating_station_id, accion.sequence_number))

    filas = []
    for clave in sorted(mensajes, key=lambda c: (c[0] is None, c[0] or 0, c[1] or 0)):
        causa, subcausa = clave
        filas.append(FilaDenm(
            cause_code=causa,
            cause_name=nombre_causa(causa),
            sub_cause_code=subcausa,
            sub_cause_name=nombre_subcausa(subcausa),
            n_msgs=mensajes[clave],
            n_stations=len(estaciones[clave]),
            n_events=len(eventos[clave]),
        ))
    return filas


# =============================================================================
# DIMENSIONES
# =============================================================================

@dataclass(frozen=True)
class BinDimension:
    length_m: float
    width_m: float
    n_stations: int


def vehicle_dims(dataset: Dataset) -> List[BinDimension]:
    """
    Histograma de (longitud, anchura) por estación única

    Cada estación cuenta una vez, con su par modal; los empates se resuelven
    por el par más pequeño. Las dimensiones no disponibles no cuentan.
    """
    pares: Dict[int, Counter] = defaultdict(Counter)
    for _, cam in _cams(_escenarios(dataset)):
        hf = cam.high_frequency
        if hf.vehicle_length == LONGITUD_NO_DISPONIBLE or hf.vehicle_width == ANCHURA_NO_DISPONIBLE:
            continue
        pares[cam.header.station_id][(hf.vehicle_length, hf.vehicle_width)] += 1

    histograma: Counter = Counter()
    for contador in pares.values():
        maximo = max(contador.values())
        modal = min(par for par, n in contador.items() if n == maximo)
        histograma[modal] += 1

    return [
        BinDimension(round(longitud * 0.1, 1), round(anchura * 0.1, 1), n)
        for (longitud, anchura), n in sorted(histograma.items())
    ]


# =============================================================================
# TRAYECTORIAS (GeoJSON)
# =============================================================================

def _nombre_tipo(station_type: int) -> str:
    try:
        return StationType(station_type).name.lower()
    except ValueError:
        return str(station_type)


def _feature(seg: Segmento) -> dict:
    coordenadas = [[lon, lat] for _, lat, lon in seg.puntos]
    geometria = (
        {"type": "LineString", "coordinates": coordenadas}
        if len(coordenadas) > 1 else {"type": "Point", "coordinates": coordenadas[0]}
    )
    return {
        "type": "Feature",
        "geometry": geometria,
        "properties": {
            "station_id": seg.station_id,
            "station_type": seg.station_type,
            "station_type_name": _nombre_tipo(seg.station_type),
            "t_start": seg.puntos[0][0],
            "t_end": seg.puntos[-1][0],
            "n_points": len(seg.puntos),
            "distance_m": round(seg.distancia_m, 3),
        },
    }


def trajectories(
    dataset: Dataset,
    station_id: Optional[int] = None,
    station_type: Optional[int] = None,
    gap_s: float = GAP_S,
    salto_m: float = SALTO_M,
) -> dict:
    """
    Trayectorias CAM como FeatureCollection

    Un LineString por (estación, tramo contiguo); los tramos de un solo punto
    se emiten como Point. Coordenadas [lon, lat] en grados.
    """
    features = [
        _feature(seg)
        for seg in segmentos_cam(_escenarios(dataset), gap_s, salto_m)
        if (station_id is None or seg.station_id == station_id)
        and (station_type is None or seg.station_type == station_type)
    ]
    return {
        "type": "FeatureCollection",
        "features": features,
        "metadata": {
            "total": len(features),
            "estaciones": len({f["properties"]["station_id"] for f in features}),
            "generado": datetime.now().isoformat(),
            "fuente": "itskit",
        },
    }


def guardar_geojson(geojson: dict, ruta) -> Path:
    ruta = Path(ruta)
    ruta.parent.mkdir(parents=True, exist_ok=True)
    with open(ruta, "w", encoding="utf-8") as f:
        json.dump(geojson, f, indent=2, ensure_ascii=False)
    logger.info(f"💾 Guardado: {ruta}")
    return ruta


def exportar_trayectorias(dataset: Dataset, carpeta, gap_s: float = GAP_S, salto_m: float = SALTO_M) -> List[Path]:
    """
    Escribe trayectorias.geojson y un estacion_<id>.geojson por estación

    Returns:
        Rutas escritas (primero la colección completa)
    """
    carpeta = Path(carpeta)
    escenarios = _escenarios(dataset)
    completa = trajectories(escenarios, gap_s=gap_s, salto_m=salto_m)
    rutas = [guardar_geojson(completa, carpeta / "trayectorias.geojson")]
    por_estacion: Dict[int, List[dict]] = defaultdict(list)
    for feature in completa["features"]:
        por_estacion[feature["properties"]["station_id"]].append(feature)
    for estacion, features in sorted(por_estacion.items()):
        individual = dict(completa, features=features, metadata=dict(completa["metadata"], total=len(features), estaciones=1))
        rutas.append(guardar_geojson(individual, carpeta / f"estacion_{estacion}.geojson"))
    return rutas


# =============================================================================
# TABLAS
# =============================================================================

def _tabla_alineada(cabeceras: Sequence[str], filas: Sequence[Sequence]) -> str:
    celdas = [[str(c) for c in cabeceras]] + [[str(c) for c in fila] for fila in filas]
    anchos = [max(len(fila[i]) for fila in celdas) for i in range(len(cabeceras))]
    lineas = ["  ".join(c.ljust(anchos[i]) if i == 0 else c.rjust(anchos[i]) for i, c in enumerate(fila)) for fila in celdas]
    lineas.insert(1, "  ".join("-" * a for a in anchos))
    return "\n".join(lineas)


CABECERAS_ESTADISTICAS = (
    "Categoría", "# CAM", "# DENM", "# MAPEM", "# SPATEM", "# Unique ITS Stations",
    "Distance Ego (km)", "Distance CAM (km)", "Duration Total (h)", "Duration V2X (h)", "Duration Context (h)",
)


def valores_estadisticas(fila: FilaEstadisticas) -> list:
    return [
        fila.n_cam, fila.n_denm, fila.n_mapem, fila.n_spatem, fila.n_unique_stations,
        f"{fila.ego_distance_km:.2f}", f"{fila.cam_distance_km:.2f}",
        f"{fila.total_duration_h:.2f}", f"{fila.v2x_duration_h:.2f}", f"{fila.context_duration_h:.2f}",
    ]


def tabla_estadisticas(report: StatsReport) -> str:
    filas = [[nombre] + valores_estadisticas(fila) for nombre, fila in report.categorias.items()]
    filas.append(["Total"] + valores_estadisticas(report.total))
    return _tabla_alineada(CABECERAS_ESTADISTICAS, filas)


def csv_estadisticas(report: StatsReport, salida: TextIO) -> None:
    campos = ["category"] + [f.name for f in fields(FilaEstadisticas)]
    writer = csv.DictWriter(salida, fieldnames=campos)
    writer.writeheader()
    for nombre, fila in report.categorias.items():
        writer.writerow({"category": nombre, **fila.a_dict()})
    writer.writerow({"category": "total", **report.total.a_dict()})


def _celda(nombre: str, codigo: Optional[int]) -> str:
    if codigo is None:
        return "n/a"
    return str(codigo) if nombre == str(codigo) else f"{nombre} ({codigo})"


def tabla_denm(filas: Sequence[FilaDenm]) -> str:
    """Columnas causeCode, subCauseCode, # Msgs, # ITS Stat."""
    return _tabla_alineada(
        ("causeCode", "subCauseCode", "# Msgs", "# ITS Stat."),
        [
            [_celda(f.cause_name, f.cause_code), _celda(f.sub_cause_name, f.sub_cause_code), f.n_msgs, f.n_stations]
            for f in filas
        ],
    )


def csv_denm(filas: Sequence[FilaDenm], salida: TextIO) -> None:
    campos = ["cause_code", "cause_name", "sub_cause_code", "sub_cause_name", "n_msgs", "n_stations", "n_events"]
    writer = csv.DictWriter(salida, fieldnames=campos)
    writer.writeheader()
    for f in filas:
        writer.writerow({c: getattr(f, c) for c in campos})


def tabla_dimensiones(bins: Sequence[BinDimension]) -> str:
    return _tabla_alineada(
        ("Length, Width (m)", "# Vehicles"),
        [[f"{b.length_m:.1f}, {b.width_m:.1f}", b.n_stations] for b in bins],
    )


def csv_dimensiones(bins: Sequence[BinDimension], salida: TextIO) -> None:
    writer = csv.DictWriter(salida, fieldnames=["length_m", "width_m", "n_stations"])
    writer.writeheader()
    for b in bins:
        writer.writerow({"length_m": b.length_m, "width_m": b.width_m, "n_stations": b.n_stations})
