"""Estadísticas, tabla DENM, dimensiones y tablas de salida"""

import csv
import io
import math

import pytest

from analyzer import (
    BinDimension,
    Escenario,
    cargar_dataset,
    csv_denm,
    csv_estadisticas,
    denm_events,
    distancias_cam_por_estacion,
    segmentos_cam,
    stats,
    tabla_denm,
    tabla_dimensiones,
    tabla_estadisticas,
    vehicle_dims,
)
from conftest import hacer_cam, hacer_denm, hacer_spatem
from dataset_io import ContextWindow, GnssFix, MessageRecord, ScenarioMeta, ScenarioRecording, guardar_escenario
from errores import EmptyDataset
from its_codec import encode_message
from recorder import RADIO_TIERRA_M

NS = 1_000_000_000
BASE = 1_688_169_600 * NS
GRADOS_POR_METRO = 180 / (math.pi * RADIO_TIERRA_M)


def s(segundos):
    return BASE + round(segundos * NS)


def registro(msg, ts):
    return MessageRecord(ts, type(msg).__name__.lower(), encode_message(msg), decoded=msg)


def grabacion(mensajes, inicio=0, fin=None, gnss=(), ventanas=(), categoria=None):
    """mensajes: [(segundos, msg)]"""
    if fin is None:
        fin = max([t for t, _ in mensajes] + [inicio]) + 1
    return ScenarioRecording(
        meta=ScenarioMeta(config={"dt_a": 10.0}, start_ts=s(inicio), end_ts=s(fin), category=categoria),
        gnss=tuple(gnss),
        messages=tuple(registro(m, s(t)) for t, m in mensajes),
        context_windows=tuple(ventanas),
    )


def esc(mensajes, categoria="default", **kwargs):
    return Escenario(None, grabacion(mensajes, **kwargs), categoria)


def recta(station_id, metros, hz=10, velocidad=10.0, lat0=50.0, lon0=6.0):
    """CAM de una estación que avanza hacia el norte"""
    n = round(metros / velocidad * hz)
    return [
        (i / hz, hacer_cam(station_id, lat=lat0 + i * velocidad / hz * GRADOS_POR_METRO, lon=lon0))
        for i in range(n + 1)
    ]


# =============================================================================
# ESTADÍSTICAS
# =============================================================================

def test_conteos_y_estaciones_unicas():
    escenario = esc([(1, hacer_cam(7)), (2, hacer_cam(7)), (3, hacer_denm(7))])
    fila = stats([escenario]).total
    assert (fila.n_cam, fila.n_denm, fila.n_mapem, fila.n_spatem) == (2, 1, 0, 0)
    assert fila.n_unique_stations == 1


def test_mensajes_no_decodificados_no_cuentan():
    rec = grabacion([(1, hacer_cam(7))])
    rec = ScenarioRecording(rec.meta, (), rec.messages + (
        MessageRecord(s(1.5), "unknown", b"\x02", decode_error="Truncated: x"),
    ))
    fila = stats([Escenario(None, rec, "default")]).total
    assert fila.n_cam == 1


def test_distancia_cam_recta_de_un_kilometro():
    fila = stats([esc(recta(1, 1000))]).total
    assert fila.cam_distance_km == pytest.approx(1.0, abs=0.001)


def test_distancia_por_estacion():
    mensajes = sorted(recta(1, 1000) + recta(2, 500, lon0=6.01), key=lambda par: par[0])
    distancias = distancias_cam_por_estacion([esc(mensajes)])
    assert distancias[1] == pytest.approx(1000, abs=1)
    assert distancias[2] == pytest.approx(500, abs=1)


def test_segmentos_se_cortan_por_silencio_y_por_salto():
    mensajes = [
        (0, hacer_cam(1, lat=50.0, lon=6.0)),
        (1, hacer_cam(1, lat=50.0001, lon=6.0)),
        (10, hacer_cam(1, lat=50.0002, lon=6.0)),     # silencio > 2 s
        (11, hacer_cam(1, lat=50.01, lon=6.0)),       # salto > 200 m
        (12, hacer_cam(1)),                           # sin posición
    ]
    segmentos = segmentos_cam([esc(mensajes)])
    assert [len(seg.puntos) for seg in segmentos] == [2, 1, 1]


def test_distancia_ego_y_duraciones():
    gnss = [GnssFix(s(t), 50.0 + t * 100 * GRADOS_POR_METRO, 6.0) for t in range(0, 3601, 60)]
    escenario = esc(
        [(100, hacer_cam(3)), (101, hacer_cam(3))],
        inicio=0, fin=3600, gnss=gnss,
        ventanas=[ContextWindow(s(100), s(106))],
    )
    fila = stats([escenario]).total
    assert fila.ego_distance_km == pytest.approx(360.0, rel=1e-6)
    assert fila.total_duration_h == pytest.approx(1.0)
    assert fila.v2x_duration_h == pytest.approx(3 / 3600)
    assert fila.context_duration_h == pytest.approx(6 / 3600)


def test_categorias_y_total():
    informe = stats([
        esc([(1, hacer_cam(1))], categoria="urbano"),
        esc([(1, hacer_cam(1)), (2, hacer_spatem(9))], categoria="autopista"),
    ])
    assert list(informe.categorias) == ["autopista", "urbano"]
    assert informe.categorias["autopista"].n_unique_stations == 2
    assert informe.total.n_cam == 2
    assert informe.total.n_spatem == 1
    assert informe.categorias["urbano"].n_unique_stations == 1
    assert informe.total.n_unique_stations == 2


def test_dataset_vacio():
    with pytest.raises(EmptyDataset):
        stats([])


def test_categoria_desde_directorio(tmp_path):
    guardar_escenario(grabacion([(1, hacer_cam(1))]), tmp_path / "urbano")
    guardar_escenario(grabacion([(1, hacer_cam(2))], categoria="autopista"), tmp_path / "otros")
    guardar_escenario(grabacion([(5, hacer_cam(3))]), tmp_path)

    escenarios = cargar_dataset(tmp_path)
    assert sorted(e.categoria for e in escenarios) == ["autopista", "default", "urbano"]
    assert list(stats(tmp_path).categorias) == ["autopista", "default", "urbano"]


def test_tabla_y_csv_de_estadisticas():
    informe = stats([esc([(1, hacer_cam(7)), (2, hacer_denm(7))], categoria="urbano")])
    tabla = tabla_estadisticas(informe)
    assert tabla.splitlines()[0].startswith("Categoría")
    assert tabla.splitlines()[-1].startswith("Total")

    salida = io.StringIO()
    csv_estadisticas(informe, salida)
    filas = list(csv.DictReader(io.StringIO(salida.getvalue())))
    assert [f["category"] for f in filas] == ["urbano", "total"]
    assert filas[1]["n_denm"] == "1"


# =============================================================================
# DENM
# =============================================================================

def test_denm_nombres():
    filas = denm_events([esc([(1, hacer_denm(causa=94, subcausa=0))])])
    assert filas[0].nombre == "Stationary vehicle / Unavailable"


def test_denm_eventos_por_action_id():
    mensajes = [(t, hacer_denm(station_id=5, secuencia=1, causa=99, subcausa=1)) for t in (1, 2, 3)]
    (fila,) = denm_events([esc(mensajes)])
    assert (fila.n_msgs, fila.n_stations, fila.n_events) == (3, 1, 1)
    assert fila.nombre == "Dangerous situation / Emergency brake"


def test_denm_subcausa_con_nombre_en_cualquier_causa():
    filas = denm_events([esc([(1, hacer_denm(causa=1, subcausa=5)), (2, hacer_denm(causa=200, subcausa=1))])])
    assert [f.nombre for f in filas] == ["Traffic Condition / AEB activated", "200 / Emergency brake"]


def test_denm_codigo_sin_nombre():
    (fila,) = denm_events([esc([(1, hacer_denm(causa=200, subcausa=3))])])
    assert (fila.cause_name, fila.sub_cause_name) == ("200", "3")


def test_denm_orden_y_sin_situacion():
    mensajes = [
        (1, hacer_denm(causa=99, subcausa=5)),
        (2, hacer_denm(situacion=False)),
        (3, hacer_denm(station_id=8, causa=1, subcausa=0)),
    ]
    filas = denm_events([esc(mensajes)])
    assert [(f.cause_code, f.sub_cause_code) for f in filas] == [(1, 0), (99, 5), (None, None)]
    assert filas[-1].nombre == "n/a / n/a"


def test_tabla_denm():
    filas = denm_events([esc([(1, hacer_denm(causa=94, subcausa=0)), (2, hacer_denm(causa=200, subcausa=3))])])
    lineas = tabla_denm(filas).splitlines()
    assert lineas[0].split("  ")[0] == "causeCode"
    assert "Stationary vehicle (94)" in lineas[2]
    assert "Unavailable (0)" in lineas[2]
    assert lineas[3].startswith("200")

    salida = io.StringIO()
    csv_denm(filas, salida)
    assert salida.getvalue().splitlines()[0] == "cause_code,cause_name,sub_cause_code,sub_cause_name,n_msgs,n_stations,n_events"


# =============================================================================
# DIMENSIONES
# =============================================================================

def test_dimensiones_en_metros():
    bins = vehicle_dims([esc([(1, hacer_cam(1, longitud=42, anchura=18))])])
    assert bins == [BinDimension(4.2, 1.8, 1)]


def test_dimensiones_no_disponibles_no_cuentan():
    mensajes = [
        (1, hacer_cam(1, longitud=1023, anchura=18)),
        (2, hacer_cam(2, longitud=45, anchura=62)),
        (3, hacer_cam(3, longitud=45, anchura=18)),
    ]
    assert vehicle_dims([esc(mensajes)]) == [BinDimension(4.5, 1.8, 1)]


def test_dimensiones_par_modal_por_estacion():
    mensajes = [
        (1, hacer_cam(1, longitud=42, anchura=18)),
        (2, hacer_cam(1, longitud=42, anchura=18)),
        (3, hacer_cam(1, longitud=49, anchura=19)),
        # empate: gana el par más pequeño
        (4, hacer_cam(2, longitud=51, anchura=19)),
        (5, hacer_cam(2, longitud=46, anchura=18)),
    ]
    bins = vehicle_dims([esc(mensajes)])
    assert bins == [BinDimension(4.2, 1.8, 1), BinDimension(4.6, 1.8, 1)]


def test_histograma_de_flota():
    flota = {(42, 18): 1164, (45, 18): 344, (46, 18): 230, (47, 19): 26, (49, 18): 11, (49, 19): 47, (51, 19): 16}
    mensajes = []
    estacion = 0
    for (longitud, anchura), n in flota.items():
        for _ in range(n):
            estacion += 1
            mensajes.append((1, hacer_cam(estacion, longitud=longitud, anchura=anchura)))
    bins = vehicle_dims([esc(mensajes)])
    assert {(b.length_m, b.width_m): b.n_stations for b in bins} == {
        (round(l * 0.1, 1), round(a * 0.1, 1)): n for (l, a), n in flota.items()
    }
    assert "4.2, 1.8" in tabla_dimensiones(bins)
