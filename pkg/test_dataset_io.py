"""Formato de escenario, recorte y unión"""

import json

import pytest

from conftest import hacer_cam, hacer_denm, hacer_spatem
from dataset_io import (
    ContextWindow,
    GnssFix,
    MessageRecord,
    ScenarioMeta,
    ScenarioRecording,
    cargar_escenario,
    guardar_escenario,
    join,
    listar_escenarios,
    mensaje_a_dict,
    mensaje_desde_dict,
    read_scenario,
    trim,
    write_scenario,
)
from errores import EmptyDataset, OverlapError, SchemaViolation, VersionMismatch
from gateway import handle_datagram
from its_codec import encode_message

NS = 1_000_000_000
BASE = 1_688_169_600 * NS


def s(segundos):
    return BASE + round(segundos * NS)


def registro(msg, ts):
    tipo = type(msg).__name__.lower()
    return MessageRecord(ts, tipo, encode_message(msg), decoded=msg)


def escenario(instantes_mensajes, inicio=0, fin=30, dt_a=10.0, ventanas=()):
    return ScenarioRecording(
        meta=ScenarioMeta(config={"dt_a": dt_a, "dt_b": 5.0, "mode": "vehicle", "d_min": 125.0},
                          start_ts=s(inicio), end_ts=s(fin), location="Aachen"),
        gnss=tuple(GnssFix(s(t), 50.77, 6.08, 180.0) for t in range(inicio, fin + 1)),
        messages=tuple(registro(hacer_cam(), s(t)) for t in instantes_mensajes),
        context_windows=tuple(ContextWindow(s(a), s(b)) for a, b in ventanas),
    )


# =============================================================================
# LECTURA / ESCRITURA
# =============================================================================

def test_escritura_y_lectura():
    rec = ScenarioRecording(
        meta=ScenarioMeta(start_ts=s(0), end_ts=s(10), category="autopista"),
        gnss=(GnssFix(s(0), 50.77, 6.08, 180.0),),
        messages=(
            registro(hacer_cam(), s(1)),
            registro(hacer_denm(), s(2)),
            registro(hacer_spatem(), s(3)),
            MessageRecord(s(4), "unknown", b"\x02\x0e", decode_error="Truncated: faltan bits"),
        ),
        context_windows=(ContextWindow(s(1), s(6)),),
    )
    datos = write_scenario(rec)
    assert read_scenario(datos) == rec
    assert write_scenario(read_scenario(datos)) == datos


def test_registro_conserva_datagrama_mas_corto_que_la_cabecera():
    evento = handle_datagram(b"\x01\x02", s(1), ("10.0.0.2", 4000), skip=4)
    rec = MessageRecord.desde_evento(evento)
    assert (rec.recv_ts, rec.type, rec.payload) == (s(1), "unknown", b"\x01\x02")
    assert rec.decode_error.startswith("Truncated")


def test_documento_legible():
    doc = json.loads(write_scenario(escenario([1])))
    assert doc["meta"]["format_version"] == 1
    mensaje = doc["messages"][0]
    assert mensaje["type"] == "cam"
    assert mensaje["decoded"]["high_frequency"]["speed"] == 16383
    assert mensaje["decoded"]["high_frequency"]["drive_direction"] == 2
    assert bytes.fromhex(mensaje["payload_hex"]) == encode_message(hacer_cam())


def test_esquema_decodificado():
    denm = hacer_denm()
    assert mensaje_desde_dict("denm", mensaje_a_dict(denm)) == denm


def documento():
    return json.loads(write_scenario(escenario([1, 2])))


def test_campo_ausente_con_ruta():
    doc = documento()
    del doc["messages"][1]["decoded"]["basic"]["station_type"]
    with pytest.raises(SchemaViolation) as excinfo:
        read_scenario(json.dumps(doc))
    assert excinfo.value.path == "messages[1].decoded.basic.station_type"


def test_campo_desconocido():
    doc = documento()
    doc["messages"][0]["decoded"]["basic"]["color"] = "rojo"
    with pytest.raises(SchemaViolation) as excinfo:
        read_scenario(json.dumps(doc))
    assert excinfo.value.path == "messages[0].decoded.basic.color"


def test_decoded_y_error_a_la_vez():
    doc = documento()
    doc["messages"][0]["decode_error"] = "Truncated: x"
    with pytest.raises(SchemaViolation) as excinfo:
        read_scenario(json.dumps(doc))
    assert excinfo.value.path == "messages[0]"


def test_decoded_no_coincide_con_payload():
    doc = documento()
    doc["messages"][0]["decoded"]["high_frequency"]["speed"] = 100
    with pytest.raises(SchemaViolation) as excinfo:
        read_scenario(json.dumps(doc))
    assert excinfo.value.path == "messages[0].decoded"
    # sin verificación se acepta tal cual
    rec = read_scenario(json.dumps(doc), verificar=False)
    assert rec.messages[0].decoded.high_frequency.speed == 100


def test_version_desconocida():
    doc = documento()
    doc["meta"]["format_version"] = 2
    with pytest.raises(VersionMismatch):
        read_scenario(json.dumps(doc))


def test_json_invalido():
    with pytest.raises(SchemaViolation):
        read_scenario(b"{no es json")


def test_gnss_desordenado_no_se_escribe():
    rec = escenario([1])
    rec = ScenarioRecording(rec.meta, tuple(reversed(rec.gnss)), rec.messages)
    with pytest.raises(SchemaViolation) as excinfo:
        write_scenario(rec)
    assert excinfo.value.path == "gnss[1].ts"


def test_mensaje_fuera_del_intervalo():
    rec = escenario([31], fin=30)
    with pytest.raises(SchemaViolation) as excinfo:
        write_scenario(rec)
    assert excinfo.value.path == "messages[0].recv_ts"


def test_archivos(tmp_path):
    rec = escenario([1])
    ruta = guardar_escenario(rec, tmp_path / "a" / "b")
    assert ruta.name.endswith(".v2x.json")
    assert ruta.name.startswith("escenario_20230701_000000")
    guardar_escenario(escenario([1], inicio=40, fin=50), tmp_path, "otro.v2x.json")
    (tmp_path / "notas.txt").write_text("x")

    assert listar_escenarios(tmp_path) == sorted([ruta, tmp_path / "otro.v2x.json"])
    assert cargar_escenario(ruta) == rec


# =============================================================================
# RECORTE
# =============================================================================

def test_trim_con_margenes_de_un_segundo():
    partes = trim(escenario([10, 11]))
    assert len(partes) == 1
    parte = partes[0]
    assert (parte.meta.start_ts, parte.meta.end_ts) == (s(9), s(12))
    assert [f.ts for f in parte.gnss] == [s(9), s(10), s(11), s(12)]
    assert len(parte.messages) == 2


def test_trim_separa_por_silencio():
    partes = trim(escenario([2, 3, 20, 21], fin=40))
    assert [(p.meta.start_ts, p.meta.end_ts) for p in partes] == [(s(1), s(4)), (s(19), s(22))]


def test_trim_con_gap_explicito():
    partes = trim(escenario([2, 3, 20, 21], fin=40), gap=30)
    assert [(p.meta.start_ts, p.meta.end_ts) for p in partes] == [(s(1), s(22))]


def test_trim_no_sale_del_intervalo_grabado():
    partes = trim(escenario([0, 30]), lead=5, trail=5, gap=60)
    assert (partes[0].meta.start_ts, partes[0].meta.end_ts) == (s(0), s(30))


def test_trim_recorta_ventanas():
    partes = trim(escenario([10, 11], ventanas=[(5, 20)]))
    assert partes[0].context_windows == (ContextWindow(s(9), s(12)),)


def test_trim_sin_mensajes():
    assert trim(escenario([])) == []


def test_trim_margen_negativo():
    with pytest.raises(ValueError):
        trim(escenario([1]), lead=-1)


# =============================================================================
# UNIÓN
# =============================================================================

def test_join_consecutivas():
    a = escenario([1, 2], inicio=0, fin=10)
    b = escenario([12], inicio=10, fin=20)
    unida = join([b, a])
    assert (unida.meta.start_ts, unida.meta.end_ts) == (s(0), s(20))
    assert [m.recv_ts for m in unida.messages] == [s(1), s(2), s(12)]
    write_scenario(unida)


def test_join_solapadas():
    with pytest.raises(OverlapError):
        join([escenario([1], inicio=0, fin=10), escenario([9], inicio=9, fin=20)])


def test_join_vacio():
    with pytest.raises(EmptyDataset):
        join([])
