"""Trayectorias CAM en GeoJSON"""

import json

import pytest

from analyzer import Escenario, exportar_trayectorias, trajectories
from conftest import hacer_cam
from dataset_io import MessageRecord, ScenarioMeta, ScenarioRecording
from its_codec import encode_message
from its_types import StationType

NS = 1_000_000_000
BASE = 1_688_169_600 * NS


def dataset():
    cams = [
        (0, hacer_cam(1, lat=50.7753, lon=6.0839, station_type=StationType.PASSENGER_CAR)),
        (1, hacer_cam(1, lat=50.7754, lon=6.0839, station_type=StationType.PASSENGER_CAR)),
        (2, hacer_cam(1, lat=50.7755, lon=6.0840, station_type=StationType.PASSENGER_CAR)),
        (1, hacer_cam(2, lat=50.7800, lon=6.0900, station_type=StationType.BUS)),
    ]
    cams.sort(key=lambda par: par[0])
    rec = ScenarioRecording(
        meta=ScenarioMeta(start_ts=BASE, end_ts=BASE + 3 * NS),
        messages=tuple(
            MessageRecord(BASE + t * NS, "cam", encode_message(cam), decoded=cam) for t, cam in cams
        ),
    )
    return [Escenario(None, rec, "default")]


def test_feature_collection():
    geojson = trajectories(dataset())
    assert geojson["type"] == "FeatureCollection"
    assert geojson["metadata"]["total"] == 2
    assert geojson["metadata"]["estaciones"] == 2
    assert geojson["metadata"]["fuente"] == "itskit"

    linea, punto = geojson["features"]
    assert linea["geometry"]["type"] == "LineString"
    assert linea["geometry"]["coordinates"][0] == pytest.approx([6.0839, 50.7753])
    assert linea["properties"]["station_id"] == 1
    assert linea["properties"]["station_type_name"] == "passenger_car"
    assert linea["properties"]["n_points"] == 3
    assert linea["properties"]["t_start"] == BASE
    assert linea["properties"]["t_end"] == BASE + 2 * NS
    assert linea["properties"]["distance_m"] > 20

    assert punto["geometry"]["type"] == "Point"
    assert punto["geometry"]["coordinates"] == pytest.approx([6.09, 50.78])
    assert punto["properties"]["distance_m"] == 0


def test_filtros():
    assert [f["properties"]["station_id"] for f in trajectories(dataset(), station_id=2)["features"]] == [2]
    solo_buses = trajectories(dataset(), station_type=int(StationType.BUS))
    assert [f["properties"]["station_type_name"] for f in solo_buses["features"]] == ["bus"]
    assert trajectories(dataset(), station_id=99)["features"] == []


def test_exportar_por_estacion(tmp_path):
    rutas = exportar_trayectorias(dataset(), tmp_path / "geojson")
    assert [r.name for r in rutas] == ["trayectorias.geojson", "estacion_1.geojson", "estacion_2.geojson"]

    with open(rutas[1], encoding="utf-8") as f:
        individual = json.load(f)
    assert individual["metadata"]["total"] == 1
    assert individual["metadata"]["estaciones"] == 1
    assert {f["properties"]["station_id"] for f in individual["features"]} == {1}
