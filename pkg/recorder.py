"""
GRABADOR AUTOMÁTICO DE ESCENARIOS
=================================
Máquina de estados de la campaña de medida:

- GNSS se registra siempre, haya o no V2X.
- Tras ``dt_a`` segundos sin ningún mensaje V2X se rota el archivo
  (una sola vez por periodo de silencio).
- Un CAM cuya posición de referencia cae a ``d_min`` metros o menos de la
  posición propia abre una ventana de contexto; se cierra tras ``dt_b``
  segundos sin CAM a esa distancia.

``step`` es una función pura; ``Grabador`` la conduce y escribe los archivos.
"""

import logging
import math
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple, Union

from dataset_io import (
    ContextWindow,
    GnssFix,
    MessageRecord,
    ScenarioMeta,
    ScenarioRecording,
    guardar_escenario,
    nombre_archivo,
)
from errores import ConfigError, DomainError, ItsKitError, NonMonotonicTime
from its_types import RANGOS, Cam

logger = logging.getLogger(__name__)

RADIO_TIERRA_M = 6371008.8
NS = 1_000_000_000

MODOS = ("vehicle", "infrastructure")
D_MIN_POR_MODO = {"vehicle": 125.0, "infrastructure": 300.0}

LAT_NO_DISPONIBLE = RANGOS["latitude"][1]
LON_NO_DISPONIBLE = RANGOS["longitude"][1]


# =============================================================================
# DISTANCIA
# =============================================================================

def haversine(p1: Tuple[float, float], p2: Tuple[float, float]) -> float:
    """
    Distancia ortodrómica en metros sobre la esfera de radio medio

    Args:
        p1: (lat, lon) en grados
        p2: (lat, lon) en grados

    Raises:
        DomainError: Coordenadas fuera de [-90, 90] x [-180, 180]
    """
    for lat, lon in (p1, p2):
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise DomainError(f"coordenadas fuera de rango: ({lat}, {lon})")
    lat1, lon1, lat2, lon2 = map(math.radians, (p1[0], p1[1], p2[0], p2[1]))
    a = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * RADIO_TIERRA_M * math.asin(min(1.0, math.sqrt(a)))


# =============================================================================
# CONFIGURACIÓN Y ESTADO
# =============================================================================

@dataclass(frozen=True)
class RecorderConfig:
    dt_a: float = 10.0
    dt_b: float = 5.0
    d_min: Optional[float] = None
    mode: str = "vehicle"

    def __post_init__(self):
        if self.mode not in MODOS:
            raise ConfigError(f"recorder.mode debe ser uno de {MODOS}, no {self.mode!r}")
        if self.dt_a <= 0 or self.dt_b <= 0:
            raise ConfigError("recorder.dt_a y recorder.dt_b deben ser > 0")
        if self.d_min is not None and self.d_min <= 0:
            raise ConfigError("recorder.d_min debe ser > 0")

    @property
    def distancia_min(self) -> float:
        """d_min configurado o el valor por defecto del modo"""
        return self.d_min if self.d_min is not None else D_MIN_POR_MODO[self.mode]

    def eco(self) -> dict:
        """Copia de la configuración que se guarda en los metadatos"""
        return {"mode": self.mode, "dt_a": self.dt_a, "dt_b": self.dt_b, "d_min": self.distancia_min}


@dataclass(frozen=True)
class RecorderState:
    file_index: int = 0
    last_v2x_ts: Optional[int] = None
    last_inrange_cam_ts: Optional[int] = None
    context_active: bool = False
    ego_position: Optional[Tuple[float, float]] = None
    last_ts: Optional[int] = None
    # Inicio del periodo de silencio actual: último V2X o primera entrada
    silence_since: Optional[int] = None
    rotated: bool = False


# Entradas

@dataclass(frozen=True)
class Gnss:
    fix: GnssFix

    @property
    def ts(self) -> int:
        return self.fix.ts


@dataclass(frozen=True)
class V2x:
    event: object
    at: Optional[int] = None

    @property
    def ts(self) -> int:
        return self.event.recv_ts if self.at is None else self.at


@dataclass(frozen=True)
class Tick:
    ts: int


Entrada = Union[Gnss, V2x, Tick]


# Acciones

@dataclass(frozen=True)
class RotateFile:
    ts: int


@dataclass(frozen=True)
class StartContext:
    ts: int


@dataclass(frozen=True)
class StopContext:
    ts: int


@dataclass(frozen=True)
class Append:
    record: Union[GnssFix, MessageRecord]
    ts: int


Accion = Union[RotateFile, StartContext, StopContext, Append]


# =============================================================================
# MÁQUINA DE ESTADOS
# =============================================================================

def _posicion_cam(cam: Cam) -> Optional[Tuple[float, float]]:
    pos = cam.basic.reference_position
    if pos.latitude == LAT_NO_DISPONIBLE or pos.longitude == LON_NO_DISPONIBLE:
        return None
    return pos.latitude * 1e-7, pos.longitude * 1e-7


def _temporizadores(state: RecorderState, config: RecorderConfig, ts: int) -> Tuple[RecorderState, List[Accion]]:
    vencidos = []
    if state.silence_since is not None and not state.rotated:
        umbral = state.silence_since + round(config.dt_a * NS)
        if ts >= umbral:
            vencidos.append(RotateFile(umbral))
            state = replace(state, rotated=True, file_index=state.file_index + 1)
    if state.context_active:
        umbral = state.last_inrange_cam_ts + round(config.dt_b * NS)
        if ts >= umbral:
            vencidos.append(StopContext(umbral))
            state = replace(state, context_active=False)
    vencidos.sort(key=lambda a: (a.ts, isinstance(a, RotateFile)))
    return state, vencidos


def step(state: RecorderState, config: RecorderConfig, entrada: Entrada) -> Tuple[RecorderState, List[Accion]]:
    """
    Avanza la máquina de estados con una entrada

    Los temporizadores se evalúan antes de procesar la entrada; las acciones
    RotateFile/StopContext llevan el instante exacto del umbral.

    Args:
        state: Estado actual (no se modifica)
        config: Parámetros dt_a, dt_b, d_min, modo
        entrada: Gnss, V2x o Tick

    Returns:
        (nuevo estado, acciones en orden temporal)

    Raises:
        NonMonotonicTime: Si la entrada es anterior a la última procesada
        DomainError: Fix GNSS con coordenadas imposibles
    """
    ts = entrada.ts
    if state.last_ts is not None and ts < state.last_ts:
        raise NonMonotonicTime(f"entrada en {ts} anterior a la última ({state.last_ts})")
    if isinstance(entrada, Gnss):
        fix = entrada.fix
        if not (-90.0 <= fix.lat <= 90.0 and -180.0 <= fix.lon <= 180.0):
            raise DomainError(f"fix GNSS fuera de rango: ({fix.lat}, {fix.lon})")
    if state.silence_since is None:
        state = replace(state, silence_since=ts)

    state, acciones = _temporizadores(state, config, ts)

    if isinstance(entrada, Gnss):
        acciones.append(Append(entrada.fix, ts))
        state = replace(state, ego_position=(entrada.fix.lat, entrada.fix.lon))

    elif isinstance(entrada, V2x):
        acciones.append(Append(MessageRecord.desde_evento(entrada.event, ts), ts))
        state = replace(state, last_v2x_ts=ts, silence_since=ts, rotated=False)
        mensaje = entrada.event.decoded
        if isinstance(mensaje, Cam) and state.ego_position is not None:
            posicion = _posicion_cam(mensaje)
            if posicion is not None and haversine(posicion, state.ego_position) <= config.distancia_min:
                if not state.context_active:
                    acciones.append(StartContext(ts))
                state = replace(state, last_inrange_cam_ts=ts, context_active=True)

    return replace(state, last_ts=ts), acciones


# =============================================================================
# GRABADOR (escritura de archivos)
# =============================================================================

class Grabador:
    """
    Conduce ``step`` con entradas de varios hilos y escribe los escenarios

    Las marcas de tiempo que llegan fuera de orden (productores concurrentes)
    se ajustan a la última vista.
    """

    def __init__(
        self,
        carpeta,
        config: RecorderConfig,
        posicion_fija: Optional[Tuple[float, float, float]] = None,
        ubicacion: Optional[str] = None,
        categoria: Optional[str] = None,
    ):
        self.carpeta = Path(carpeta)
        self.carpeta.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.posicion_fija = posicion_fija
        self.ubicacion = ubicacion
        self.categoria = categoria
        self.estado = RecorderState(
            ego_position=(posicion_fija[0], posicion_fija[1]) if posicion_fija else None
        )
        self.archivos: List[Path] = []
        self.estadisticas = {"registros": 0, "archivos": 0, "contextos": 0, "errores": 0}
        self._lock = threading.Lock()
        self._nuevo_archivo(None)

    def _nuevo_archivo(self, inicio: Optional[int]) -> None:
        self._inicio = inicio
        self._gnss: List[GnssFix] = []
        self._mensajes: List[MessageRecord] = []
        self._ventanas: List[ContextWindow] = []
        self._ventana_desde: Optional[int] = None

    def _ajustar(self, entrada: Entrada) -> Entrada:
        ultimo = self.estado.last_ts
        if ultimo is None or entrada.ts >= ultimo:
            return entrada
        if isinstance(entrada, Gnss):
            return Gnss(replace(entrada.fix, ts=ultimo))
        if isinstance(entrada, V2x):
            return V2x(entrada.event, at=ultimo)
        return Tick(ultimo)

    def procesar(self, entrada: Entrada) -> List[Accion]:
        """Aplica una entrada; los errores se registran y se cuentan"""
        with self._lock:
            entrada = self._ajustar(entrada)
            try:
                self.estado, acciones = step(self.estado, self.config, entrada)
            except ItsKitError as e:
                logger.error(f"❌ Entrada descartada: {type(e).__name__}: {e}")
                self.estadisticas["errores"] += 1
                return []
            if self._inicio is None:
                self._inicio = entrada.ts
            for accion in acciones:
                self._aplicar(accion)
            return acciones

    def _aplicar(self, accion: Accion) -> None:
        if isinstance(accion, Append):
            if isinstance(accion.record, GnssFix):
                self._gnss.append(accion.record)
            else:
                self._mensajes.append(accion.record)
            self.estadisticas["registros"] += 1
        elif isinstance(accion, StartContext):
            self._ventana_desde = accion.ts
            self.estadisticas["contextos"] += 1
            logger.info("🎥 Inicio de ventana de contexto")
        elif isinstance(accion, StopContext):
            self._ventanas.append(ContextWindow(self._ventana_desde, accion.ts))
            self._ventana_desde = None
            logger.info("⏹️ Fin de ventana de contexto")
        elif isinstance(accion, RotateFile):
            abierta = self._ventana_desde is not None
            if abierta:
                self._ventanas.append(ContextWindow(self._ventana_desde, accion.ts))
            logger.info(f"🔄 Silencio V2X de {self.config.dt_a} s: rotando archivo")
            self._escribir(accion.ts)
            self._nuevo_archivo(accion.ts)
            if abierta:
                self._ventana_desde = accion.ts

    def _escribir(self, fin: int) -> Optional[Path]:
        if not self._gnss and not self._mensajes:
            return None
        rec = ScenarioRecording(
            meta=ScenarioMeta(
                recorder_mode=self.config.mode,
                config=self.config.eco(),
                start_ts=self._inicio,
                end_ts=fin,
                location=self.ubicacion,
                category=self.categoria,
            ),
            gnss=tuple(self._gnss),
            messages=tuple(self._mensajes),
            context_windows=tuple(self._ventanas),
        )
        ruta = guardar_escenario(rec, self.carpeta, nombre_archivo(self._inicio, len(self.archivos)))
        self.archivos.append(ruta)
        self.estadisticas["archivos"] += 1
        return ruta

    # Atajos usados por el gateway y el receptor GNSS

    def v2x(self, evento) -> List[Accion]:
        return self.procesar(V2x(evento))

    def gnss(self, fix: GnssFix) -> List[Accion]:
        return self.procesar(Gnss(fix))

    def tick(self, ts: Optional[int] = None) -> List[Accion]:
        """Evalúa temporizadores; con posición fija además registra esa posición"""
        ts = time.time_ns() if ts is None else ts
        if self.posicion_fija is not None:
            lat, lon, alt = self.posicion_fija
            return self.procesar(Gnss(GnssFix(ts, lat, lon, alt)))
        return self.procesar(Tick(ts))

    def cerrar(self, ts: Optional[int] = None) -> Optional[Path]:
        """Cierra la ventana abierta y escribe el último archivo"""
        if ts is None:
            ts = self.estado.last_ts if self.estado.last_ts is not None else time.time_ns()
        self.procesar(Tick(ts))
        with self._lock:
            fin = max(ts, self.estado.last_ts or ts)
            if self._inicio is None:
                return None
            if self._ventana_desde is not None:
                self._ventanas.append(ContextWindow(self._ventana_desde, fin))
                self._ventana_desde = None
            ruta = self._escribir(fin)
            self._nuevo_archivo(fin)
            logger.info(
                f"📊 Grabación cerrada: {self.estadisticas['registros']} registros, "
                f"{self.estadisticas['archivos']} archivos, {self.estadisticas['contextos']} contextos"
            )
            return ruta


class Ticker:
    """Hilo que llama a ``Grabador.tick`` cada ``periodo_s`` segundos"""

    def __init__(self, grabador: Grabador, periodo_s: float = 1.0):
        self.grabador = grabador
        self.periodo_s = periodo_s
        self.activo = False
        self._parar = threading.Event()
        self._hilo: Optional[threading.Thread] = None

    def _bucle(self):
        while not self._parar.wait(self.periodo_s):
            try:
                self.grabador.tick()
            except Exception as e:
                logger.error(f"❌ Error en tick: {e}")

    def iniciar(self) -> bool:
        if self.activo:
            return False
        self.activo = True
        self._parar.clear()
        self._hilo = threading.Thread(target=self._bucle, daemon=True)
        self._hilo.start()
        return True

    def detener(self) -> bool:
        if not self.activo:
            return False
        self.activo = False
        self._parar.set()
        if self._hilo and self._hilo.is_alive():
            self._hilo.join(timeout=2)
        return True


def config_desde_dict(datos: dict) -> RecorderConfig:
    """RecorderConfig a partir de la sección ``recorder`` de la configuración"""
    return RecorderConfig(
        dt_a=float(datos.get("dt_a", 10.0)),
        dt_b=float(datos.get("dt_b", 5.0)),
        d_min=None if datos.get("d_min") is None else float(datos["d_min"]),
        mode=datos.get("mode", "vehicle"),
    )
