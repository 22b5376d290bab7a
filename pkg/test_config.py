"""Configuración: defaults, archivo, entorno y opciones"""

import json
import logging

import pytest

from config import (
    DEFAULTS,
    aplicar_opciones,
    cargar_config,
    configurar_logging,
    fusionar,
    obtener_endpoint,
    resolver_webhook,
)
from errores import ConfigError


@pytest.fixture(autouse=True)
def entorno_limpio(monkeypatch):
    for variable in ("ITSKIT_CONFIG", "PORT", "ITSKIT_DATASET", "INTERVALO_ACTUALIZACION"):
        monkeypatch.delenv(variable, raising=False)


def escribir(tmp_path, datos):
    ruta = tmp_path / "itskit.json"
    ruta.write_text(json.dumps(datos), encoding="utf-8")
    return str(ruta)


def test_defaults():
    config = cargar_config()
    assert config == DEFAULTS
    assert config is not DEFAULTS
    assert config["recorder"]["dt_a"] == 10.0
    assert config["gateway"]["listen"] == "0.0.0.0:17755"


def test_archivo_sobre_defaults(tmp_path):
    config = cargar_config(escribir(tmp_path, {"recorder": {"dt_a": 20, "mode": "infrastructure"}}))
    assert config["recorder"]["dt_a"] == 20.0
    assert isinstance(config["recorder"]["dt_a"], float)
    assert config["recorder"]["mode"] == "infrastructure"
    assert config["recorder"]["dt_b"] == 5.0


def test_archivo_desde_variable_de_entorno(tmp_path, monkeypatch):
    monkeypatch.setenv("ITSKIT_CONFIG", escribir(tmp_path, {"server": {"port": 8080}}))
    assert cargar_config()["server"]["port"] == 8080


@pytest.mark.parametrize("cambios,mensaje", [
    ({"gateway": {"listn": "x"}}, "clave desconocida: gateway.listn"),
    ({"plugins": {}}, "clave desconocida: plugins"),
    ({"recorder": {"dt_a": "diez"}}, "recorder.dt_a"),
    ({"gateway": {"queue_size": True}}, "gateway.queue_size"),
    ({"gateway": {"queue_size": 1.5}}, "gateway.queue_size"),
    ({"gateway": {"listen": None}}, "gateway.listen: no admite null"),
    ({"recorder": "rapido"}, "recorder: se esperaba un objeto"),
    ({"endpoints": {"erp": {"headers": {}}}}, "endpoints.erp: se necesita 'url'"),
    ({"endpoints": {"erp": {"url": "http://x", "token": "t"}}}, "clave desconocida: endpoints.erp.token"),
])
def test_fusionar_rechaza(cambios, mensaje):
    with pytest.raises(ConfigError) as excinfo:
        fusionar(DEFAULTS, cambios)
    assert mensaje in str(excinfo.value)


def test_fusionar_anulables():
    config = fusionar(DEFAULTS, {"recorder": {"d_min": 50, "position": [50.77, 6.08]}, "dataset": {"gap_s": None}})
    assert config["recorder"]["d_min"] == 50.0
    assert config["recorder"]["position"] == [50.77, 6.08]
    assert config["dataset"]["gap_s"] is None
    assert DEFAULTS["recorder"]["d_min"] is None


def test_json_invalido(tmp_path):
    ruta = tmp_path / "roto.json"
    ruta.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="JSON inválido"):
        cargar_config(str(ruta))


def test_archivo_inexistente(tmp_path):
    with pytest.raises(ConfigError, match="no se pudo leer"):
        cargar_config(str(tmp_path / "no_existe.json"))


def test_entorno_sobre_archivo(tmp_path, monkeypatch):
    monkeypatch.setenv("PORT", "9090")
    monkeypatch.setenv("ITSKIT_DATASET", "/datos")
    monkeypatch.setenv("INTERVALO_ACTUALIZACION", "")
    config = cargar_config(escribir(tmp_path, {"server": {"port": 8080, "interval": 10}}))
    assert config["server"] == {"port": 9090, "interval": 10, "dataset": "/datos"}


def test_entorno_invalido(monkeypatch):
    monkeypatch.setenv("PORT", "cinco mil")
    with pytest.raises(ConfigError, match="PORT"):
        cargar_config()


def test_opciones_de_linea_de_comandos():
    config = aplicar_opciones(DEFAULTS, {"recorder.dt_a": 3.0, "recorder.mode": None, "gateway.skip_octets": 4})
    assert config["recorder"]["dt_a"] == 3.0
    assert config["recorder"]["mode"] == "vehicle"
    assert config["gateway"]["skip_octets"] == 4
    with pytest.raises(ConfigError):
        aplicar_opciones(DEFAULTS, {"recorder.dt_c": 1.0})


# =============================================================================
# ENDPOINTS
# =============================================================================

def test_endpoints():
    config = fusionar(DEFAULTS, {"endpoints": {
        "erp": {"url": "https://erp.example.com/api/v2x", "headers": {"Authorization": "Bearer x"}},
        "local": {"url": "http://localhost:8000/v2x", "descripcion": "Pruebas"},
    }})
    assert obtener_endpoint(config, "erp")["headers"] == {"Authorization": "Bearer x"}
    local = obtener_endpoint(config, "local")
    assert local["headers"] == {"Content-Type": "application/json"}
    assert local["descripcion"] == "Pruebas"
    assert obtener_endpoint(config, "otro") is None

    assert resolver_webhook(config, "erp")["url"] == "https://erp.example.com/api/v2x"
    assert resolver_webhook(config, "http://10.0.0.1/hook")["url"] == "http://10.0.0.1/hook"
    with pytest.raises(ConfigError, match="webhook desconocido"):
        resolver_webhook(config, "ftp://x")


# =============================================================================
# LOGGING
# =============================================================================

def test_nivel_de_log(monkeypatch):
    monkeypatch.setenv("ITSKIT_LOG_LEVEL", "warning")
    configurar_logging()
    assert logging.getLogger().level == logging.WARNING
    configurar_logging("debug")
    assert logging.getLogger().level == logging.DEBUG
    configurar_logging("INFO")
    with pytest.raises(ConfigError, match="nivel de log desconocido"):
        configurar_logging("ruidoso")
