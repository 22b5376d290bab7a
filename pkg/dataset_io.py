"""
FORMATO DE ESCENARIOS (.v2x.json)
=================================
Un escenario = un archivo JSON legible con metadatos, traza GNSS, mensajes
V2X con su payload en hexadecimal y su forma decodificada en escala de
cable, y las ventanas de captura de contexto.

También incluye el postprocesado: recorte (trim) y unión (join).
"""

import dataclasses
import enum
import functools
import json
import logging
import typing
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from errores import (
    DecodeError,
    EmptyDataset,
    OverlapError,
    SchemaViolation,
    VersionMismatch,
)
from its_codec import decode_message
from its_types import TIPO_POR_NOMBRE, ItsMessage, message_type_name

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
EXTENSION = ".v2x.json"
NS = 1_000_000_000
GAP_POR_DEFECTO_S = 10.0


# =============================================================================
# TIPOS
# =============================================================================

@dataclass(frozen=True)
class GnssFix:
    ts: int
    lat: float
    lon: float
    alt: float = 0.0


@dataclass(frozen=True)
class MessageRecord:
    """Un mensaje recibido; ``decoded`` o ``decode_error``, nunca ambos"""

    recv_ts: int
    type: str
    payload: bytes
    decoded: Optional[ItsMessage] = None
    decode_error: Optional[str] = None

    @classmethod
    def desde_evento(cls, evento, ts: Optional[int] = None) -> "MessageRecord":
        """Construye el registro a partir de un RxEvent del gateway"""
        instante = evento.recv_ts if ts is None else ts
        if evento.decoded is not None:
            return cls(instante, message_type_name(evento.decoded), evento.pdu, decoded=evento.decoded)
        error = evento.error
        return cls(instante, "unknown", evento.pdu, decode_error=f"{type(error).__name__}: {error}")


@dataclass(frozen=True)
class ContextWindow:
    start_ts: int
    end_ts: int


@dataclass(frozen=True)
class ScenarioMeta:
    format_version: int = FORMAT_VERSION
    recorder_mode: str = "vehicle"
    config: Dict[str, Any] = field(default_factory=dict)
    start_ts: int = 0
    end_ts: int = 0
    location: Optional[str] = None
    category: Optional[str] = None


@dataclass(frozen=True)
class ScenarioRecording:
    meta: ScenarioMeta = field(default_factory=ScenarioMeta)
    gnss: Tuple[GnssFix, ...] = ()
    messages: Tuple[MessageRecord, ...] = ()
    context_windows: Tuple[ContextWindow, ...] = ()


# =============================================================================
# ESQUEMA DECODIFICADO
# =============================================================================

def mensaje_a_dict(valor) -> Any:
    """
    Convierte un mensaje (o una parte) al esquema decodificado

    Campos con los nombres de its_types, enteros en escala de cable,
    enumeraciones como enteros, None para opcionales ausentes.
    """
    if dataclasses.is_dataclass(valor):
        return {f.name: mensaje_a_dict(getattr(valor, f.name)) for f in dataclasses.fields(valor)}
    if isinstance(valor, tuple):
        return [mensaje_a_dict(v) for v in valor]
    if isinstance(valor, bool) or valor is None:
        return valor
    if isinstance(valor, enum.IntEnum):
        return int(valor)
    return valor


def _convertir(tipo, valor, path: str):
    origen = typing.get_origin(tipo)
    if origen is Union:
        if valor is None:
            return None
        candidatos = [a for a in typing.get_args(tipo) if a is not type(None)]
        return _convertir(candidatos[0], valor, path)
    if origen is tuple:
        if not isinstance(valor, list):
            raise SchemaViolation(path, "se esperaba una lista")
        elemento = typing.get_args(tipo)[0]
        return tuple(_convertir(elemento, v, f"{path}[{i}]") for i, v in enumerate(valor))
    if dataclasses.is_dataclass(tipo):
        return _objeto(tipo, valor, path)
    if valor is None:
        raise SchemaViolation(path, "valor obligatorio ausente (null)")
    if tipo is bool:
        if not isinstance(valor, bool):
            raise SchemaViolation(path, "se esperaba un booleano")
        return valor
    if isinstance(valor, bool) or not isinstance(valor, int):
        raise SchemaViolation(path, f"se esperaba un entero, no {type(valor).__name__}")
    if isinstance(tipo, type) and issubclass(tipo, enum.IntEnum):
        try:
            return tipo(valor)
        except ValueError:
            raise SchemaViolation(path, f"{valor} no es un {tipo.__name__}") from None
    return valor


@functools.lru_cache(maxsize=None)
def _tipos(cls) -> dict:
    return typing.get_type_hints(cls)


def _objeto(cls, datos, path: str):
    if not isinstance(datos, dict):
        raise SchemaViolation(path, "se esperaba un objeto")
    tipos = _tipos(cls)
    campos = {f.name: f for f in dataclasses.fields(cls)}
    for clave in datos:
        if clave not in campos:
            raise SchemaViolation(f"{path}.{clave}", "campo desconocido")
    argumentos = {}
    for nombre, f in campos.items():
        if nombre not in datos:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise SchemaViolation(f"{path}.{nombre}", "campo obligatorio ausente")
            continue
        argumentos[nombre] = _convertir(tipos[nombre], datos[nombre], f"{path}.{nombre}")
    return cls(**argumentos)


def mensaje_desde_dict(tipo: str, datos: dict, path: str = "decoded") -> ItsMessage:
    """
    Construye un mensaje tipado a partir del esquema decodificado

    Args:
        tipo: 'cam' | 'denm' | 'spatem' | 'mapem'
        datos: Objeto con los campos del mensaje
        path: Prefijo para las rutas de error

    Raises:
        SchemaViolation: Tipo desconocido, campo ausente, desconocido o mal tipado
    """
    cls = TIPO_POR_NOMBRE.get(tipo)
    if cls is None:
        raise SchemaViolation("type", f"tipo de mensaje desconocido: {tipo!r}")
    return _objeto(cls, datos, path)


# =============================================================================
# LECTURA / ESCRITURA
# =============================================================================

def _ordenado(valor):
    if isinstance(valor, dict):
        return {k: _ordenado(valor[k]) for k in sorted(valor)}
    if isinstance(valor, (list, tuple)):
        return [_ordenado(v) for v in valor]
    return valor


def _comprobar_invariantes(rec: ScenarioRecording) -> None:
    meta = rec.meta
    if meta.start_ts > meta.end_ts:
        raise SchemaViolation("meta.end_ts", "end_ts anterior a start_ts")
    anterior = None
    for i, fix in enumerate(rec.gnss):
        if anterior is not None and fix.ts < anterior:
            raise SchemaViolation(f"gnss[{i}].ts", "traza GNSS desordenada")
        if not meta.start_ts <= fix.ts <= meta.end_ts:
            raise SchemaViolation(f"gnss[{i}].ts", "fuera de [start_ts, end_ts]")
        anterior = fix.ts
    anterior = None
    for i, msg in enumerate(rec.messages):
        if anterior is not None and msg.recv_ts < anterior:
            raise SchemaViolation(f"messages[{i}].recv_ts", "mensajes desordenados")
        if not meta.start_ts <= msg.recv_ts <= meta.end_ts:
            raise SchemaViolation(f"messages[{i}].recv_ts", "fuera de [start_ts, end_ts]")
        anterior = msg.recv_ts
    anterior = None
    for i, ventana in enumerate(rec.context_windows):
        if ventana.start_ts > ventana.end_ts:
            raise SchemaViolation(f"context_windows[{i}]", "ventana con fin anterior al inicio")
        if anterior is not None and ventana.start_ts < anterior:
            raise SchemaViolation(f"context_windows[{i}]", "ventanas solapadas o desordenadas")
        anterior = ventana.end_ts


def _registro_a_dict(msg: MessageRecord) -> dict:
    doc = {"recv_ts": msg.recv_ts, "type": msg.type, "payload_hex": msg.payload.hex()}
    if msg.decoded is not None:
        doc["decoded"] = mensaje_a_dict(msg.decoded)
    else:
        doc["decode_error"] = msg.decode_error
    return doc


def escenario_a_dict(rec: ScenarioRecording) -> dict:
    meta = rec.meta
    return {
        "meta": {
            "format_version": meta.format_version,
            "recorder_mode": meta.recorder_mode,
            "config": _ordenado(meta.config),
            "start_ts": meta.start_ts,
            "end_ts": meta.end_ts,
            "location": meta.location,
            "category": meta.category,
        },
        "gnss": [{"ts": f.ts, "lat": f.lat, "lon": f.lon, "alt": f.alt} for f in rec.gnss],
        "messages": [_registro_a_dict(m) for m in rec.messages],
        "context_windows": [{"start_ts": v.start_ts, "end_ts": v.end_ts} for v in rec.context_windows],
    }


def write_scenario(rec: ScenarioRecording) -> bytes:
    """
    Serializa un escenario de forma determinista (UTF-8, orden de claves fijo)

    Raises:
        SchemaViolation: Si el escenario no cumple sus invariantes
    """
    _comprobar_invariantes(rec)
    texto = json.dumps(escenario_a_dict(rec), indent=2, ensure_ascii=False)
    return (texto + "\n").encode("utf-8")


def _campo(datos: dict, clave: str, tipos, path: str, opcional: bool = False):
    ruta = f"{path}.{clave}" if path else clave
    if clave not in datos:
        raise SchemaViolation(ruta, "campo obligatorio ausente")
    valor = datos[clave]
    if valor is None and opcional:
        return None
    admitidos = tipos if isinstance(tipos, tuple) else (tipos,)
    if isinstance(valor, bool) and bool not in admitidos:
        raise SchemaViolation(ruta, "tipo incorrecto (bool)")
    if not isinstance(valor, admitidos):
        raise SchemaViolation(ruta, f"tipo incorrecto ({type(valor).__name__})")
    return valor


def _leer_registro(doc, path: str, verificar: bool) -> MessageRecord:
    if not isinstance(doc, dict):
        raise SchemaViolation(path, "se esperaba un objeto")
    recv_ts = _campo(doc, "recv_ts", int, path)
    tipo = _campo(doc, "type", str, path)
    texto_hex = _campo(doc, "payload_hex", str, path)
    try:
        payload = bytes.fromhex(texto_hex)
    except ValueError:
        raise SchemaViolation(f"{path}.payload_hex", "hexadecimal inválido") from None

    tiene_decoded = doc.get("decoded") is not None
    tiene_error = doc.get("decode_error") is not None
    if tiene_decoded == tiene_error:
        raise SchemaViolation(path, "se requiere exactamente uno de decoded / decode_error")
    if tiene_error:
        error = _campo(doc, "decode_error", str, path)
        return MessageRecord(recv_ts, tipo, payload, decode_error=error)

    decoded = mensaje_desde_dict(tipo, doc["decoded"], f"{path}.decoded")
    if verificar:
        try:
            desde_payload = decode_message(payload)
        except DecodeError as e:
            raise SchemaViolation(f"{path}.payload_hex", f"no decodifica: {type(e).__name__}: {e}") from None
        if desde_payload != decoded:
            raise SchemaViolation(f"{path}.decoded", "no coincide con payload_hex")
    return MessageRecord(recv_ts, tipo, payload, decoded=decoded)


def read_scenario(datos: Union[bytes, str], verificar: bool = True) -> ScenarioRecording:
    """
    Lee un documento de escenario

    Args:
        datos: Contenido del archivo
        verificar: Decodifica cada payload_hex y comprueba que coincide con decoded

    Raises:
        SchemaViolation: Documento mal formado (con la ruta del campo)
        VersionMismatch: format_version desconocida
    """
    try:
        doc = json.loads(datos)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise SchemaViolation("", f"JSON inválido: {e}") from None
    if not isinstance(doc, dict):
        raise SchemaViolation("", "se esperaba un objeto")
    for clave in doc:
        if clave not in ("meta", "gnss", "messages", "context_windows"):
            raise SchemaViolation(clave, "campo desconocido")

    meta_doc = _campo(doc, "meta", dict, "")
    version = _campo(meta_doc, "format_version", int, "meta")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format_version {version} no soportada (se admite {FORMAT_VERSION})")
    meta = ScenarioMeta(
        format_version=version,
        recorder_mode=_campo(meta_doc, "recorder_mode", str, "meta"),
        config=_campo(meta_doc, "config", dict, "meta"),
        start_ts=_campo(meta_doc, "start_ts", int, "meta"),
        end_ts=_campo(meta_doc, "end_ts", int, "meta"),
        location=_campo(meta_doc, "location", str, "meta", opcional=True),
        category=_campo(meta_doc, "category", str, "meta", opcional=True),
    )

    gnss = []
    for i, f in enumerate(_campo(doc, "gnss", list, "")):
        path = f"gnss[{i}]"
        if not isinstance(f, dict):
            raise SchemaViolation(path, "se esperaba un objeto")
        gnss.append(GnssFix(
            ts=_campo(f, "ts", int, path),
            lat=float(_campo(f, "lat", (int, float), path)),
            lon=float(_campo(f, "lon", (int, float), path)),
            alt=float(_campo(f, "alt", (int, float), path)),
        ))

    mensajes = [
        _leer_registro(m, f"messages[{i}]", verificar)
        for i, m in enumerate(_campo(doc, "messages", list, ""))
    ]

    ventanas = []
    for i, v in enumerate(_campo(doc, "context_windows", list, "")):
        path = f"context_windows[{i}]"
        if not isinstance(v, dict):
            raise SchemaViolation(path, "se esperaba un objeto")
        ventanas.append(ContextWindow(_campo(v, "start_ts", int, path), _campo(v, "end_ts", int, path)))

    rec = ScenarioRecording(meta, tuple(gnss), tuple(mensajes), tuple(ventanas))
    _comprobar_invariantes(rec)
    return rec


# =============================================================================
# ARCHIVOS
# =============================================================================

def nombre_archivo(start_ts: int, indice: int) -> str:
    """escenario_<UTC YYYYmmdd_HHMMSS>_<indice>.v2x.json"""
    instante = datetime.fromtimestamp(start_ts // NS, tz=timezone.utc)
    return f"escenario_{instante:%Y%m%d_%H%M%S}_{indice:03d}{EXTENSION}"


def guardar_escenario(rec: ScenarioRecording, carpeta, nombre: Optional[str] = None) -> Path:
    """Escribe el escenario en ``carpeta`` y devuelve la ruta"""
    carpeta = Path(carpeta)
    carpeta.mkdir(parents=True, exist_ok=True)
    ruta = carpeta / (nombre or nombre_archivo(rec.meta.start_ts, 0))
    ruta.write_bytes(write_scenario(rec))
    logger.info(f"💾 Escenario guardado: {ruta} ({len(rec.messages)} mensajes, {len(rec.gnss)} GNSS)")
    return ruta


def cargar_escenario(ruta, verificar: bool = True) -> ScenarioRecording:
    return read_scenario(Path(ruta).read_bytes(), verificar=verificar)


def listar_escenarios(carpeta) -> List[Path]:
    """Todos los *.v2x.json bajo ``carpeta`` (recursivo), ordenados"""
    return sorted(Path(carpeta).rglob(f"*{EXTENSION}"))


# =============================================================================
# POSTPROCESADO
# =============================================================================

def _recortar(rec: ScenarioRecording, inicio: int, fin: int, mensajes) -> ScenarioRecording:
    ventanas = []
    for v in rec.context_windows:
        a, b = max(v.start_ts, inicio), min(v.end_ts, fin)
        if a < b:
            ventanas.append(ContextWindow(a, b))
    return ScenarioRecording(
        meta=replace(rec.meta, start_ts=inicio, end_ts=fin),
        gnss=tuple(f for f in rec.gnss if inicio <= f.ts <= fin),
        messages=tuple(mensajes),
        context_windows=tuple(ventanas),
    )


def trim(
    rec: ScenarioRecording,
    lead: float = 1.0,
    trail: float = 1.0,
    gap: Optional[float] = None,
) -> List[ScenarioRecording]:
    """
    Recorta un escenario a los tramos con mensajes V2X

    Args:
        rec: Escenario completo
        lead: Segundos conservados antes del primer mensaje de cada grupo
        trail: Segundos conservados después del último
        gap: Silencio (s) que separa dos grupos; por defecto el dt_a de la grabación

    Returns:
        Un escenario por grupo maximal de mensajes (vacío si no hay mensajes)
    """
    if lead < 0 or trail < 0:
        raise ValueError("lead y trail deben ser >= 0")
    if gap is None:
        gap = rec.meta.config.get("dt_a") or GAP_POR_DEFECTO_S
    gap_ns, lead_ns, trail_ns = round(gap * NS), round(lead * NS), round(trail * NS)

    grupos: List[List[MessageRecord]] = []
    for msg in rec.messages:
        if grupos and msg.recv_ts - grupos[-1][-1].recv_ts <= gap_ns:
            grupos[-1].append(msg)
        else:
            grupos.append([msg])

    # Tramos expandidos; se fusionan si llegan a solaparse
    tramos: List[Tuple[int, int, List[MessageRecord]]] = []
    for grupo in grupos:
        inicio = max(grupo[0].recv_ts - lead_ns, rec.meta.start_ts)
        fin = min(grupo[-1].recv_ts + trail_ns, rec.meta.end_ts)
        if tramos and inicio <= tramos[-1][1]:
            ini_previo, _, previos = tramos[-1]
            tramos[-1] = (ini_previo, fin, previos + grupo)
        else:
            tramos.append((inicio, fin, grupo))

    return [_recortar(rec, inicio, fin, mensajes) for inicio, fin, mensajes in tramos]


def join(recs: Sequence[ScenarioRecording]) -> ScenarioRecording:
    """
    Une grabaciones consecutivas de un mismo recorrido

    Raises:
        EmptyDataset: Lista vacía
        OverlapError: Dos grabaciones se solapan en el tiempo (tocarse está permitido)
    """
    if not recs:
        raise EmptyDataset("no hay grabaciones que unir")
    ordenadas = sorted(recs, key=lambda r: (r.meta.start_ts, r.meta.end_ts))
    for previa, siguiente in zip(ordenadas, ordenadas[1:]):
        if siguiente.meta.start_ts < previa.meta.end_ts:
            raise OverlapError(
                f"[{previa.meta.start_ts}, {previa.meta.end_ts}] se solapa con "
                f"[{siguiente.meta.start_ts}, {siguiente.meta.end_ts}]"
            )
    primera = ordenadas[0]
    return ScenarioRecording(
        meta=replace(primera.meta, start_ts=primera.meta.start_ts, end_ts=ordenadas[-1].meta.end_ts),
        gnss=tuple(sorted((f for r in ordenadas for f in r.gnss), key=lambda f: f.ts)),
        messages=tuple(sorted((m for r in ordenadas for m in r.messages), key=lambda m: m.recv_ts)),
        context_windows=tuple(v for r in ordenadas for v in r.context_windows),
    )
