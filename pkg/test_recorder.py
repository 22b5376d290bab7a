"""Máquina de estados del grabador y escritura de escenarios"""

import random

import pytest

from conftest import hacer_cam, hacer_denm
from dataset_io import ContextWindow, GnssFix, cargar_escenario
from errores import ConfigError, DomainError, NonMonotonicTime
from gateway import RxEvent
from its_codec import encode_message
from recorder import (
    Gnss,
    Grabador,
    RecorderConfig,
    RecorderState,
    RotateFile,
    StartContext,
    StopContext,
    Tick,
    V2x,
    config_desde_dict,
    haversine,
    step,
)

NS = 1_000_000_000
BASE = 1_688_169_600 * NS
EGO = (50.7753, 6.0839)
ORIGEN = ("127.0.0.1", 40000)


def s(segundos):
    return BASE + round(segundos * NS)


def evento(msg, ts):
    return RxEvent(ts, ORIGEN, encode_message(msg), decoded=msg)


def cam_en(lat, lon, ts):
    return V2x(evento(hacer_cam(lat=lat, lon=lon), ts))


def fix(ts, lat=EGO[0], lon=EGO[1]):
    return Gnss(GnssFix(ts, lat, lon, 200.0))


def reproducir(entradas, config=RecorderConfig()):
    estado = RecorderState()
    acciones = []
    for entrada in entradas:
        estado, nuevas = step(estado, config, entrada)
        acciones.extend(nuevas)
    return estado, acciones


def eventos_de_control(acciones):
    return [a for a in acciones if isinstance(a, (RotateFile, StartContext, StopContext))]


# =============================================================================
# DISTANCIA
# =============================================================================

def test_haversine_aachen_colonia():
    assert haversine((50.7753, 6.0839), (50.9375, 6.9603)) == pytest.approx(64300, abs=100)


def test_haversine_mismo_punto():
    assert haversine(EGO, EGO) == 0.0


def test_haversine_fuera_de_dominio():
    with pytest.raises(DomainError):
        haversine((91.0, 0.0), EGO)


# =============================================================================
# CONFIGURACIÓN
# =============================================================================

def test_d_min_por_modo():
    assert RecorderConfig().distancia_min == 125.0
    assert RecorderConfig(mode="infrastructure").distancia_min == 300.0
    assert RecorderConfig(d_min=50).distancia_min == 50


@pytest.mark.parametrize("parametros", [{"dt_a": 0}, {"dt_b": -1}, {"d_min": 0}, {"mode": "drone"}])
def test_configuracion_invalida(parametros):
    with pytest.raises(ConfigError):
        RecorderConfig(**parametros)


def test_config_desde_dict():
    config = config_desde_dict({"mode": "infrastructure", "dt_a": 20, "dt_b": 3, "d_min": None})
    assert config == RecorderConfig(dt_a=20.0, dt_b=3.0, mode="infrastructure")
    assert config.eco() == {"mode": "infrastructure", "dt_a": 20.0, "dt_b": 3.0, "d_min": 300.0}


# =============================================================================
# LÍNEA DE TIEMPO
# =============================================================================

def test_linea_de_tiempo_completa():
    """
    GNSS desde 0 s; V2X lejano desde 15 s; CAM cercanos de 20 a 30 s;
    V2X lejano hasta 40 s y después solo GNSS
    """
    lejos = (EGO[0] + 0.01, EGO[1])
    entradas = []
    for t in range(0, 61):
        entradas.append(fix(s(t)))
        if 15 <= t <= 40:
            entradas.append(cam_en(*lejos, s(t + 0.5)))
        if 20 <= t <= 30:
            entradas.append(cam_en(*EGO, s(t + 0.5) + 1))

    _, acciones = reproducir(entradas)
    assert eventos_de_control(acciones) == [
        RotateFile(s(10)),
        StartContext(s(20.5) + 1),
        StopContext(s(30.5) + 1 + 5 * NS),
        RotateFile(s(40.5) + 10 * NS),
    ]


def test_gnss_se_registra_siempre():
    _, acciones = reproducir([fix(s(t)) for t in range(5)])
    assert [a.record.ts for a in acciones] == [s(t) for t in range(5)]


def test_rotacion_una_vez_por_silencio():
    entradas = [V2x(evento(hacer_denm(), s(0)))] + [Tick(s(t)) for t in range(1, 40)]
    _, acciones = reproducir(entradas)
    assert eventos_de_control(acciones) == [RotateFile(s(10))]


def test_rotacion_se_rearma_con_un_nuevo_mensaje():
    entradas = [
        V2x(evento(hacer_denm(), s(0))),
        Tick(s(12)),
        V2x(evento(hacer_denm(), s(13))),
        Tick(s(30)),
    ]
    _, acciones = reproducir(entradas)
    assert eventos_de_control(acciones) == [RotateFile(s(10)), RotateFile(s(23))]


def test_sin_posicion_propia_no_hay_contexto():
    entradas = [cam_en(*EGO, s(t)) for t in range(10)]
    estado, acciones = reproducir(entradas)
    assert eventos_de_control(acciones) == []
    assert not estado.context_active


def test_cam_sin_posicion_no_abre_contexto():
    entradas = [fix(s(0)), V2x(evento(hacer_cam(), s(1)))]
    _, acciones = reproducir(entradas)
    assert eventos_de_control(acciones) == []


def test_cam_exactamente_a_d_min_abre_contexto():
    cam = hacer_cam(lat=EGO[0] + 0.001, lon=EGO[1])
    pos = cam.basic.reference_position
    distancia = haversine((pos.latitude * 1e-7, pos.longitude * 1e-7), EGO)

    _, acciones = reproducir([fix(s(0)), V2x(evento(cam, s(1)))], RecorderConfig(d_min=distancia))
    assert StartContext(s(1)) in acciones

    _, acciones = reproducir([fix(s(0)), V2x(evento(cam, s(1)))], RecorderConfig(d_min=distancia - 0.01))
    assert eventos_de_control(acciones) == []


def test_tiempo_no_monotono():
    estado, _ = step(RecorderState(), RecorderConfig(), Tick(s(5)))
    with pytest.raises(NonMonotonicTime):
        step(estado, RecorderConfig(), Tick(s(4)))


def test_fix_gnss_imposible():
    with pytest.raises(DomainError):
        step(RecorderState(), RecorderConfig(), fix(s(0), lat=95.0))


def ventanas_esperadas(instantes_cercanos, dt_b_ns):
    ventanas = []
    for t in instantes_cercanos:
        if ventanas and t < ventanas[-1][1]:
            ventanas[-1][1] = t + dt_b_ns
        else:
            ventanas.append([t, t + dt_b_ns])
    return [tuple(v) for v in ventanas]


def test_ventanas_de_contexto_aleatorias():
    rng = random.Random(7)
    config = RecorderConfig(dt_b=2.0)
    cerca = hacer_cam(lat=EGO[0], lon=EGO[1])
    lejos = hacer_cam(lat=EGO[0] + 0.01, lon=EGO[1])
    payloads = {cerca: encode_message(cerca), lejos: encode_message(lejos)}

    def cam(msg, ts):
        return V2x(RxEvent(ts, ORIGEN, payloads[msg], decoded=msg))

    for _ in range(1000):
        entradas = [fix(s(0))]
        cercanos = []
        t = 0
        for _ in range(150):
            # pasos en ms para provocar empates exactos con el umbral
            t += rng.choice([100, 500, 1000, 2000, 3000])
            ts = s(t / 1000)
            if rng.random() < 0.5:
                entradas.append(cam(cerca, ts))
                cercanos.append(ts)
            else:
                entradas.append(cam(lejos, ts))
        entradas.append(Tick(s(t / 1000 + 100)))

        _, acciones = reproducir(entradas, config)
        inicios = [a.ts for a in acciones if isinstance(a, StartContext)]
        fines = [a.ts for a in acciones if isinstance(a, StopContext)]
        assert list(zip(inicios, fines)) == ventanas_esperadas(cercanos, 2 * NS)


# =============================================================================
# GRABADOR
# =============================================================================

def test_grabador_rota_y_guarda_contexto(tmp_path):
    grabador = Grabador(tmp_path, RecorderConfig(), ubicacion="Aachen", categoria="urbano")
    for t in range(0, 31):
        grabador.gnss(GnssFix(s(t), *EGO, 200.0))
        if 1 <= t <= 5:
            grabador.v2x(evento(hacer_cam(lat=EGO[0], lon=EGO[1]), s(t) + 1))
    grabador.cerrar(s(30))

    assert len(grabador.archivos) == 2
    primero, segundo = (cargar_escenario(r) for r in grabador.archivos)

    assert (primero.meta.start_ts, primero.meta.end_ts) == (s(0), s(15) + 1)
    assert len(primero.messages) == 5
    assert primero.context_windows == (ContextWindow(s(1) + 1, s(10) + 1),)
    assert primero.meta.location == "Aachen"
    assert primero.meta.config["d_min"] == 125.0

    assert segundo.messages == ()
    assert segundo.meta.end_ts == s(30)
    assert [f.ts for f in segundo.gnss] == [s(t) for t in range(16, 31)]
    assert grabador.estadisticas["contextos"] == 1


def test_grabador_cierra_ventana_abierta(tmp_path):
    grabador = Grabador(tmp_path, RecorderConfig(), posicion_fija=(*EGO, 0.0))
    grabador.v2x(evento(hacer_cam(lat=EGO[0], lon=EGO[1]), s(0)))
    grabador.tick(s(1))
    ruta = grabador.cerrar(s(2))

    rec = cargar_escenario(ruta)
    assert rec.context_windows == (ContextWindow(s(0), s(2)),)
    assert [f.ts for f in rec.gnss] == [s(1)]


def test_grabador_ajusta_entradas_desordenadas(tmp_path):
    grabador = Grabador(tmp_path, RecorderConfig())
    grabador.gnss(GnssFix(s(5), *EGO))
    grabador.v2x(evento(hacer_denm(), s(4)))
    ruta = grabador.cerrar()

    rec = cargar_escenario(ruta)
    assert rec.messages[0].recv_ts == s(5)
    assert grabador.estadisticas["errores"] == 0


def test_grabador_descarta_fix_imposible(tmp_path):
    grabador = Grabador(tmp_path, RecorderConfig())
    assert grabador.gnss(GnssFix(s(0), 120.0, 0.0)) == []
    assert grabador.estadisticas["errores"] == 1
    assert grabador.cerrar(s(1)) is None
