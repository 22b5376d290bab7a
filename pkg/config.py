"""
CONFIGURACIÓN DE ITSKIT
=======================
Valores por defecto de todos los módulos, archivo JSON opcional,
variables de entorno (.env incluido) y configuración del logging.

Precedencia: defaults < archivo < entorno < opciones de línea de comandos.
"""

import copy
import json
import logging
import os
import sys
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from errores import ConfigError

logger = logging.getLogger(__name__)

DEFAULTS: Dict[str, Any] = {
    "gateway": {
        "listen": "0.0.0.0:17755",
        "skip_octets": 0,
        "queue_size": 4096,
        "forward": None,
        "webhook": None,
    },
    "recorder": {
        "mode": "vehicle",
        "dt_a": 10.0,
        "dt_b": 5.0,
        "d_min": None,
        "tick_s": 1.0,
        "gnss_listen": None,
        "position": None,
        "location": None,
    },
    "dataset": {
        "lead_s": 1.0,
        "trail_s": 1.0,
        "gap_s": None,
    },
    "analyzer": {
        "gap_s": 2.0,
        "jump_m": 200.0,
        "format": "table",
    },
    "simulate": {
        "realtime": False,
    },
    "server": {
        "port": 5000,
        "interval": 30,
        "dataset": ".",
    },
    # Webhooks con nombre: {"nombre": {"url": ..., "headers": {...}, "descripcion": ...}}
    "endpoints": {},
}

# Claves cuyo valor puede ser null además del tipo del default
_ANULABLES = {
    "gateway.forward": str,
    "gateway.webhook": str,
    "recorder.d_min": float,
    "recorder.gnss_listen": str,
    "recorder.position": list,
    "recorder.location": str,
    "dataset.gap_s": float,
}

# Variable de entorno → clave de configuración
VARIABLES_ENTORNO = {
    "PORT": "server.port",
    "ITSKIT_DATASET": "server.dataset",
    "INTERVALO_ACTUALIZACION": "server.interval",
}


# =============================================================================
# CARGA
# =============================================================================

def _comprobar_tipo(ruta: str, valor: Any, referencia: Any) -> Any:
    if valor is None:
        if ruta in _ANULABLES:
            return None
        raise ConfigError(f"{ruta}: no admite null")
    esperado = _ANULABLES.get(ruta, type(referencia))
    if esperado is float and isinstance(valor, int) and not isinstance(valor, bool):
        return float(valor)
    if esperado is bool or isinstance(valor, bool):
        if isinstance(valor, bool) and esperado is bool:
            return valor
        raise ConfigError(f"{ruta}: se esperaba {esperado.__name__}, no {type(valor).__name__}")
    if not isinstance(valor, esperado):
        raise ConfigError(f"{ruta}: se esperaba {esperado.__name__}, no {type(valor).__name__}")
    return valor


def _comprobar_endpoints(endpoints: Any) -> Dict[str, dict]:
    if not isinstance(endpoints, dict):
        raise ConfigError("endpoints: se esperaba un objeto")
    for nombre, endpoint in endpoints.items():
        if not isinstance(endpoint, dict) or not isinstance(endpoint.get("url"), str):
            raise ConfigError(f"endpoints.{nombre}: se necesita 'url'")
        for clave in endpoint:
            if clave not in ("url", "headers", "descripcion"):
                raise ConfigError(f"clave desconocida: endpoints.{nombre}.{clave}")
        if not isinstance(endpoint.get("headers", {}), dict):
            raise ConfigError(f"endpoints.{nombre}.headers: se esperaba un objeto")
    return endpoints


def fusionar(base: Dict[str, Any], cambios: Dict[str, Any], prefijo: str = "") -> Dict[str, Any]:
    """
    Mezcla ``cambios`` sobre ``base`` comprobando claves y tipos

    Raises:
        ConfigError: Clave desconocida (con su ruta) o tipo incorrecto
    """
    if not isinstance(cambios, dict):
        raise ConfigError(f"{prefijo or 'config'}: se esperaba un objeto")
    resultado = copy.deepcopy(base)
    for clave, valor in cambios.items():
        ruta = f"{prefijo}.{clave}" if prefijo else clave
        if clave not in base:
            raise ConfigError(f"clave desconocida: {ruta}")
        if ruta == "endpoints":
            resultado[clave] = {**base[clave], **_comprobar_endpoints(valor)}
        elif isinstance(base[clave], dict):
            resultado[clave] = fusionar(base[clave], valor, ruta)
        else:
            resultado[clave] = _comprobar_tipo(ruta, valor, base[clave])
    return resultado


def _entorno(config: Dict[str, Any]) -> Dict[str, Any]:
    for variable, ruta in VARIABLES_ENTORNO.items():
        texto = os.getenv(variable)
        if texto is None or texto == "":
            continue
        seccion, clave = ruta.split(".")
        tipo = type(DEFAULTS[seccion][clave])
        try:
            config[seccion][clave] = tipo(texto)
        except ValueError:
            raise ConfigError(f"{variable}={texto!r}: se esperaba {tipo.__name__}") from None
    return config


def cargar_config(ruta: Optional[str] = None) -> Dict[str, Any]:
    """
    Construye la configuración efectiva (sin las opciones de línea de comandos)

    Args:
        ruta: Archivo JSON; si es None se usa ITSKIT_CONFIG si existe

    Returns:
        Diccionario anidado con todas las claves de DEFAULTS

    Raises:
        ConfigError: Archivo ilegible, JSON inválido, clave o tipo incorrecto
    """
    load_dotenv()
    ruta = ruta or os.getenv("ITSKIT_CONFIG")
    config = copy.deepcopy(DEFAULTS)
    if ruta:
        try:
            with open(ruta, "r", encoding="utf-8") as f:
                datos = json.load(f)
        except OSError as e:
            raise ConfigError(f"no se pudo leer {ruta}: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{ruta}: JSON inválido: {e}") from None
        config = fusionar(config, datos)
    return _entorno(config)


def aplicar_opciones(config: Dict[str, Any], opciones: Dict[str, Any]) -> Dict[str, Any]:
    """Aplica opciones de CLI {"seccion.clave": valor}; los None se ignoran"""
    cambios: Dict[str, Any] = {}
    for ruta, valor in opciones.items():
        if valor is None:
            continue
        seccion, clave = ruta.split(".")
        cambios.setdefault(seccion, {})[clave] = valor
    return fusionar(config, cambios)


# =============================================================================
# ENDPOINTS
# =============================================================================

def obtener_endpoint(config: Dict[str, Any], nombre: str) -> Optional[dict]:
    """
    Obtiene la configuración de un endpoint por nombre

    Returns:
        Diccionario con url y headers, o None si no existe
    """
    endpoint = config["endpoints"].get(nombre)
    if endpoint is None:
        return None
    return {
        "url": endpoint["url"],
        "headers": endpoint.get("headers") or {"Content-Type": "application/json"},
        "descripcion": endpoint.get("descripcion", ""),
    }


def resolver_webhook(config: Dict[str, Any], valor: str) -> dict:
    """``valor`` es el nombre de un endpoint configurado o una URL http(s)"""
    endpoint = obtener_endpoint(config, valor)
    if endpoint is not None:
        return endpoint
    if valor.startswith(("http://", "https://")):
        return {"url": valor, "headers": {"Content-Type": "application/json"}, "descripcion": ""}
    raise ConfigError(f"webhook desconocido: {valor!r} (ni endpoint configurado ni URL)")


# =============================================================================
# LOGGING
# =============================================================================

def configurar_logging(nivel: Optional[str] = None) -> None:
    """Mensajes de estado a stderr; el nivel sale de ITSKIT_LOG_LEVEL si no se indica"""
    nivel = (nivel or os.getenv("ITSKIT_LOG_LEVEL") or "INFO").upper()
    if not isinstance(logging.getLevelName(nivel), int):
        raise ConfigError(f"nivel de log desconocido: {nivel}")
    logging.basicConfig(level=nivel, format="%(message)s", stream=sys.stderr, force=True)
