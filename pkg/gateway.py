"""
GATEWAY UDP ⇄ MENSAJES ITS
==========================
Recibe payloads V2X por UDP (un PDU por datagrama), los decodifica y entrega
un RxEvent por datagrama a un sink, en orden de llegada y sin pérdidas.

Hilos: un receptor (marca recv_ts al leer del socket) y un trabajador
(decodifica y llama al sink), unidos por una cola acotada que bloquea.
"""

import json
import logging
import queue
import socket
import sys
import threading
import time
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Dict, List, Optional, Tuple

import requests

from dataset_io import GnssFix, mensaje_a_dict
from errores import ConfigError, DecodeError, SendFailure, BindFailure, Truncated
from its_codec import decode_message, encode_message
from its_types import ItsMessage, message_type_name

logger = logging.getLogger(__name__)

Direccion = Tuple[str, int]

PUERTO_POR_DEFECTO = 17755
TAMANO_BUFFER_SOCKET = 4 * 1024 * 1024
MAX_DATAGRAMA = 65535
_FIN = object()


def parse_direccion(texto: str, puerto_por_defecto: int = PUERTO_POR_DEFECTO) -> Direccion:
    """
    'host:puerto' → (host, puerto)

    Raises:
        ConfigError: Si el puerto no es un entero válido
    """
    host, sep, puerto = texto.strip().rpartition(":")
    if not sep:
        host, puerto = puerto, str(puerto_por_defecto)
    host = host.strip("[]") or "0.0.0.0"
    try:
        numero = int(puerto)
    except ValueError:
        raise ConfigError(f"dirección inválida: {texto!r}") from None
    if not 0 <= numero <= 65535:
        raise ConfigError(f"puerto fuera de rango: {numero}")
    return host, numero


# =============================================================================
# EVENTOS
# =============================================================================

@dataclass(frozen=True)
class RxEvent:
    """Un datagrama recibido: el payload íntegro y el mensaje o el error"""

    recv_ts: int
    source: Direccion
    payload: bytes
    decoded: Optional[ItsMessage] = None
    error: Optional[DecodeError] = None
    skip: int = 0

    @property
    def pdu(self) -> bytes:
        """Payload sin la cabecera saltada"""
        return self.payload[self.skip:]


def handle_datagram(payload: bytes, recv_ts: int, source: Direccion, skip: int = 0) -> RxEvent:
    """
    Convierte un datagrama en RxEvent; los fallos de decodificación son datos

    Args:
        payload: Datagrama tal cual
        recv_ts: ns Unix marcados al leer del socket
        source: (ip, puerto) de origen
        skip: Octetos de cabecera (GN/BTP) a saltar
    """
    payload = bytes(payload)
    if skip > len(payload):
        error = Truncated(f"el datagrama tiene {len(payload)} octetos, se saltan {skip}")
        return RxEvent(recv_ts, source, payload, error=error)
    try:
        return RxEvent(recv_ts, source, payload, decoded=decode_message(payload[skip:]), skip=skip)
    except DecodeError as e:
        return RxEvent(recv_ts, source, payload, error=e, skip=skip)


def evento_a_dict(evento: RxEvent) -> dict:
    """Forma JSON de un evento (webhook, salida de la CLI)"""
    datos = {
        "recv_ts": evento.recv_ts,
        "source": f"{evento.source[0]}:{evento.source[1]}",
        "payload_hex": evento.payload.hex(),
    }
    if evento.decoded is not None:
        datos["type"] = message_type_name(evento.decoded)
        datos["decoded"] = mensaje_a_dict(evento.decoded)
    else:
        datos["type"] = "unknown"
        datos["decode_error"] = f"{type(evento.error).__name__}: {evento.error}"
    return datos


# =============================================================================
# ENVÍO
# =============================================================================

def send(msg: ItsMessage, dest: Direccion, sock: Optional[socket.socket] = None) -> int:
    """
    Codifica y envía un mensaje en un datagrama

    Returns:
        Octetos enviados

    Raises:
        InvalidMessage: Si el mensaje no pasa validate
        SendFailure: Si el socket no puede enviar
    """
    payload = encode_message(msg)
    propio = sock is None
    try:
        if propio:
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        return sock.sendto(payload, dest)
    except OSError as e:
        raise SendFailure(f"no se pudo enviar a {dest[0]}:{dest[1]}: {e}") from e
    finally:
        if propio and sock is not None:
            sock.close()


# =============================================================================
# SINKS
# =============================================================================

class SinkLista:
    """Acumula los eventos en memoria"""

    def __init__(self):
        self.eventos: List[RxEvent] = []
        self.flushes = 0
        self._lock = threading.Lock()

    def __call__(self, evento: RxEvent) -> None:
        with self._lock:
            self.eventos.append(evento)

    def flush(self) -> None:
        self.flushes += 1


class SinkConsola:
    """Una línea JSON por evento en la salida estándar"""

    def __init__(self, salida=None):
        self.salida = salida or sys.stdout
        self._lock = threading.Lock()

    def __call__(self, evento: RxEvent) -> None:
        linea = json.dumps(evento_a_dict(evento), ensure_ascii=False)
        with self._lock:
            self.salida.write(linea + "\n")
            self.salida.flush()

    def flush(self) -> None:
        pass


class SinkReenvio:
    """Reemite el payload original a otra dirección UDP"""

    def __init__(self, destino: Direccion):
        self.destino = destino
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.estadisticas = {"reenviados": 0, "errores": 0}

    def __call__(self, evento: RxEvent) -> None:
        try:
            self.sock.sendto(evento.payload, self.destino)
            self.estadisticas["reenviados"] += 1
        except OSError as e:
            self.estadisticas["errores"] += 1
            logger.error(f"❌ Error al reenviar a {self.destino[0]}:{self.destino[1]}: {e}")

    def flush(self) -> None:
        self.sock.close()


class SinkWebhook:
    """
    Envía cada evento como JSON a un endpoint HTTP

    Los fallos se cuentan en ``estadisticas`` y nunca se propagan.
    """

    def __init__(self, url: str, headers: Optional[dict] = None, timeout: float = 30):
        self.url = url
        self.headers = headers or {"Content-Type": "application/json"}
        self.timeout = timeout
        self.estadisticas = {"total_envios": 0, "envios_exitosos": 0, "errores": 0}

    def __call__(self, evento: RxEvent) -> None:
        self.estadisticas["total_envios"] += 1
        payload = {
            "timestamp": datetime.now().isoformat(),
            "source": "itskit",
            "data": evento_a_dict(evento),
        }
        try:
            response = requests.post(self.url, json=payload, headers=self.headers, timeout=self.timeout)
            response.raise_for_status()
            self.estadisticas["envios_exitosos"] += 1
        except requests.exceptions.RequestException as e:
            self.estadisticas["errores"] += 1
            logger.error(f"❌ Error al enviar datos a {self.url}: {e}")
            if getattr(e, "response", None) is not None:
                logger.error(f"   Status: {e.response.status_code}")

    def flush(self) -> None:
        total = self.estadisticas["total_envios"]
        if total:
            tasa = self.estadisticas["envios_exitosos"] / total * 100
            logger.info(f"📊 Webhook: {self.estadisticas['envios_exitosos']}/{total} exitosos ({tasa:.1f}%)")


class SinkGrabador:
    """Alimenta un ``recorder.Grabador``; flush cierra la grabación"""

    def __init__(self, grabador):
        self.grabador = grabador

    def __call__(self, evento: RxEvent) -> None:
        self.grabador.v2x(evento)

    def flush(self) -> None:
        self.grabador.cerrar()


class SinkMultiple:
    """Reparte cada evento entre varios sinks, en orden"""

    def __init__(self, *sinks):
        self.sinks = list(sinks)

    def __call__(self, evento: RxEvent) -> None:
        for sink in self.sinks:
            try:
                sink(evento)
            except Exception as e:
                logger.error(f"❌ Error en sink {type(sink).__name__}: {e}")

    def flush(self) -> None:
        for sink in self.sinks:
            sink.flush()


# =============================================================================
# GATEWAY
# =============================================================================

@dataclass(frozen=True)
class GatewayConfig:
    listen_address: Direccion = ("0.0.0.0", PUERTO_POR_DEFECTO)
    skip: int = 0
    queue_size: int = 4096
    forward: Optional[Direccion] = None


def _abrir_socket(direccion: Direccion) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, TAMANO_BUFFER_SOCKET)
    except OSError:
        logger.warning("⚠️ No se pudo ampliar SO_RCVBUF")
    try:
        sock.bind(direccion)
    except OSError as e:
        sock.close()
        raise BindFailure(f"no se pudo escuchar en {direccion[0]}:{direccion[1]}: {e}") from e
    sock.settimeout(0.2)
    return sock


class Gateway:
    """
    Daemon UDP: receptor + trabajador

    Uso:
        gw = Gateway(GatewayConfig(...), sink)
        gw.iniciar()
        ...
        gw.detener()   # vacía la cola y hace flush del sink
    """

    def __init__(self, config: GatewayConfig, sink):
        self.config = config
        self.sink = sink
        self.activo = False
        self._sock: Optional[socket.socket] = None
        self._cola: "queue.Queue" = queue.Queue(maxsize=config.queue_size)
        self._hilo_receptor: Optional[threading.Thread] = None
        self._hilo_trabajador: Optional[threading.Thread] = None
        self.estadisticas = {
            "recibidos": 0,
            "decodificados": 0,
            "errores": 0,
            "errores_socket": 0,
            "errores_sink": 0,
            "inicio": None,
        }

    @property
    def direccion(self) -> Optional[Direccion]:
        """Dirección realmente enlazada (resuelve el puerto 0)"""
        return self._sock.getsockname() if self._sock else None

    def _recibir(self):
        while self.activo:
            try:
                datos, origen = self._sock.recvfrom(MAX_DATAGRAMA)
            except socket.timeout:
                continue
            except OSError as e:
                if self.activo:
                    logger.error(f"❌ Error en el socket: {e}")
                    self.estadisticas["errores_socket"] += 1
                continue
            recv_ts = time.time_ns()
            self._cola.put((datos, origen, recv_ts))
            self.estadisticas["recibidos"] += 1

    def _trabajar(self):
        while True:
            item = self._cola.get()
            if item is _FIN:
                break
            datos, origen, recv_ts = item
            evento = handle_datagram(datos, recv_ts, origen, self.config.skip)
            if evento.decoded is not None:
                self.estadisticas["decodificados"] += 1
            else:
                self.estadisticas["errores"] += 1
                logger.warning(f"⚠️ Datagrama de {origen[0]}:{origen[1]} no decodificable: "
                               f"{type(evento.error).__name__}: {evento.error}")
            try:
                self.sink(evento)
            except Exception as e:
                self.estadisticas["errores_sink"] += 1
                logger.error(f"❌ Error en el sink: {e}")

    def iniciar(self) -> bool:
        """
        Abre el socket y arranca los hilos

        Raises:
            BindFailure: Si la dirección no está disponible
        """
        if self.activo:
            logger.warning("⚠️ El gateway ya está activo")
            return False
        self._sock = _abrir_socket(self.config.listen_address)
        self.activo = True
        self.estadisticas["inicio"] = datetime.now()
        self._hilo_trabajador = threading.Thread(target=self._trabajar, daemon=True)
        self._hilo_receptor = threading.Thread(target=self._recibir, daemon=True)
        self._hilo_trabajador.start()
        self._hilo_receptor.start()
        host, puerto = self.direccion
        logger.info(f"🚀 Gateway escuchando en {host}:{puerto} (skip {self.config.skip} octetos)")
        return True

    def detener(self) -> bool:
        """Para la recepción, procesa lo pendiente y hace flush del sink"""
        if not self.activo:
            logger.warning("⚠️ El gateway no está activo")
            return False
        self.activo = False
        # _FIN solo cuando el receptor ya no puede encolar nada más
        if self._hilo_receptor and self._hilo_receptor.is_alive():
            self._hilo_receptor.join()
        self._cola.put(_FIN)
        if self._hilo_trabajador:
            self._hilo_trabajador.join()
        if self._sock:
            self._sock.close()
            self._sock = None
        try:
            self.sink.flush()
        except Exception as e:
            logger.error(f"❌ Error al vaciar el sink: {e}")

        if self.estadisticas["inicio"]:
            duracion = datetime.now() - self.estadisticas["inicio"]
            logger.info("📊 ESTADÍSTICAS FINALES:")
            logger.info(f"   Duración: {duracion}")
            logger.info(f"   Recibidos: {self.estadisticas['recibidos']}")
            logger.info(f"   Decodificados: {self.estadisticas['decodificados']}")
            logger.info(f"   Errores: {self.estadisticas['errores']}")
        logger.info("✅ Gateway detenido")
        return True

    def estado(self) -> Dict:
        """Contadores actuales"""
        return {
            "activo": self.activo,
            "direccion": self.direccion,
            "recibidos": self.estadisticas["recibidos"],
            "decodificados": self.estadisticas["decodificados"],
            "errores": self.estadisticas["errores"],
            "errores_socket": self.estadisticas["errores_socket"],
            "errores_sink": self.estadisticas["errores_sink"],
            "en_cola": self._cola.qsize(),
            "inicio": self.estadisticas["inicio"].isoformat() if self.estadisticas["inicio"] else None,
        }


def run(config: GatewayConfig, sink, parada: Optional[threading.Event] = None) -> Gateway:
    """
    Ejecuta el gateway hasta que ``parada`` se activa o llega Ctrl+C

    Raises:
        BindFailure: Al arrancar
    """
    parada = parada or threading.Event()
    gateway = Gateway(config, sink)
    gateway.iniciar()
    try:
        while not parada.wait(0.5):
            pass
    except KeyboardInterrupt:
        logger.info("🛑 Deteniendo gateway...")
    finally:
        gateway.detener()
    return gateway


# =============================================================================
# RECEPTOR GNSS
# =============================================================================

class ReceptorGnss:
    """
    Recibe fixes GNSS por UDP como JSON {"lat": .., "lng": .., "alt": ..}

    Cada fix se marca con la hora de lectura y se pasa a ``destino``.
    """

    def __init__(self, direccion: Direccion, destino: Callable[[GnssFix], object]):
        self.config_direccion = direccion
        self.destino = destino
        self.activo = False
        self._sock: Optional[socket.socket] = None
        self._hilo: Optional[threading.Thread] = None
        self.estadisticas = {"recibidos": 0, "invalidos": 0}

    @property
    def direccion(self) -> Optional[Direccion]:
        return self._sock.getsockname() if self._sock else None

    def _recibir(self):
        while self.activo:
            try:
                datos, _ = self._sock.recvfrom(MAX_DATAGRAMA)
            except socket.timeout:
                continue
            except OSError:
                continue
            ts = time.time_ns()
            try:
                doc = json.loads(datos)
                fix = GnssFix(ts, float(doc["lat"]), float(doc["lng"]), float(doc.get("alt", 0.0)))
            except (ValueError, KeyError, TypeError) as e:
                self.estadisticas["invalidos"] += 1
                logger.warning(f"⚠️ Fix GNSS inválido: {e}")
                continue
            self.estadisticas["recibidos"] += 1
            self.destino(fix)

    def iniciar(self) -> bool:
        if self.activo:
            return False
        self._sock = _abrir_socket(self.config_direccion)
        self.activo = True
        self._hilo = threading.Thread(target=self._recibir, daemon=True)
        self._hilo.start()
        host, puerto = self.direccion
        logger.info(f"🛰️ Receptor GNSS escuchando en {host}:{puerto}")
        return True

    def detener(self) -> bool:
        if not self.activo:
            return False
        self.activo = False
        if self._hilo and self._hilo.is_alive():
            self._hilo.join(timeout=2)
        if self._sock:
            self._sock.close()
            self._sock = None
        return True
