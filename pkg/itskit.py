"""
ITSKIT - LÍNEA DE COMANDOS
==========================
Gateway UDP, grabación de escenarios, decodificación/codificación,
análisis del dataset, simulación de tráfico y servidor HTTP.

Uso:
    python itskit.py gateway --listen 0.0.0.0:17755 [--skip-octets N] [--out DIR] [--forward H:P] [--webhook URL|NOMBRE]
    python itskit.py record --listen H:P --out DIR [--dt-a S --dt-b S --d-min M] [--mode vehicle|infrastructure]
    python itskit.py decode HEX... [--json] [--skip-octets N]
    python itskit.py encode [ARCHIVO]
    python itskit.py analyze stats|denm|dims|traj DATASET [--format ...]
    python itskit.py simulate --config SIM.json [--udp H:P | --out DIR] [--ground-truth GT.json]
    python itskit.py trim ESCENARIO... -o DIR
    python itskit.py join ESCENARIO... -o ARCHIVO
    python itskit.py serve [DATASET] [--port N]

Códigos de salida: 0 correcto, 1 uso/configuración, 2 datos/códec.
"""

import argparse
import dataclasses
import enum
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

import analyzer
import config as configuracion
import dataset_io
import gateway as gw
import recorder
import trafficgen
from errores import BindFailure, ConfigError, ItsKitError, RangeViolation, SchemaViolation
from its_codec import encode_message
from its_types import UNAVAILABLE, FieldKind, message_type_name, unix_ns_desde_its, validate, wire_to_si

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USO = 1
EXIT_DATOS = 2


class _Parser(argparse.ArgumentParser):
    """argparse con salida 1 en errores de uso"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USO, f"{self.prog}: error: {message}\n")


def _escribir(texto: str) -> None:
    sys.stdout.write(texto if texto.endswith("\n") else texto + "\n")


# =============================================================================
# GATEWAY / RECORD
# =============================================================================

def _sinks_red(cfg: dict) -> list:
    sinks = []
    if cfg["gateway"]["forward"]:
        sinks.append(gw.SinkReenvio(gw.parse_direccion(cfg["gateway"]["forward"])))
    if cfg["gateway"]["webhook"]:
        endpoint = configuracion.resolver_webhook(cfg, cfg["gateway"]["webhook"])
        sinks.append(gw.SinkWebhook(endpoint["url"], endpoint["headers"]))
        logger.info(f"🌐 Webhook: {endpoint['url']}")
    return sinks


def _config_gateway(cfg: dict) -> gw.GatewayConfig:
    return gw.GatewayConfig(
        listen_address=gw.parse_direccion(cfg["gateway"]["listen"]),
        skip=cfg["gateway"]["skip_octets"],
        queue_size=cfg["gateway"]["queue_size"],
    )


def _grabador(salida: str, cfg: dict) -> recorder.Grabador:
    rcfg = cfg["recorder"]
    posicion = tuple(rcfg["position"]) if rcfg["position"] else None
    if posicion is not None and len(posicion) == 2:
        posicion = (posicion[0], posicion[1], 0.0)
    if posicion is not None and len(posicion) != 3:
        raise ConfigError("recorder.position: se esperaba [lat, lon] o [lat, lon, alt]")
    return recorder.Grabador(salida, recorder.config_desde_dict(rcfg), posicion_fija=posicion,
                             ubicacion=rcfg["location"])


def cmd_gateway(args, cfg: dict) -> int:
    sinks = [gw.SinkConsola()] if not args.quiet else []
    ticker = None
    if args.salida:
        grabador = _grabador(args.salida, cfg)
        sinks.append(gw.SinkGrabador(grabador))
        ticker = recorder.Ticker(grabador, cfg["recorder"]["tick_s"])
        ticker.iniciar()
        logger.info(f"💾 Grabando en {args.salida}")
    sink = gw.SinkMultiple(*(sinks + _sinks_red(cfg)))
    try:
        gw.run(_config_gateway(cfg), sink)
    finally:
        if ticker:
            ticker.detener()
    return EXIT_OK


def cmd_record(args, cfg: dict) -> int:
    rcfg = cfg["recorder"]
    grabador = _grabador(args.salida, cfg)
    config_rec = grabador.config
    sink = gw.SinkMultiple(gw.SinkGrabador(grabador), *_sinks_red(cfg))

    receptor = None
    if rcfg["gnss_listen"]:
        receptor = gw.ReceptorGnss(gw.parse_direccion(rcfg["gnss_listen"]), grabador.gnss)
        receptor.iniciar()
    ticker = recorder.Ticker(grabador, rcfg["tick_s"])
    ticker.iniciar()
    logger.info(f"🚀 Grabando en {args.salida} (modo {config_rec.mode}, dt_a={config_rec.dt_a}s, "
                f"dt_b={config_rec.dt_b}s, d_min={config_rec.distancia_min}m)")
    try:
        gw.run(_config_gateway(cfg), sink)
    finally:
        ticker.detener()
        if receptor:
            receptor.detener()
    logger.info(f"💾 {len(grabador.archivos)} archivos escritos")
    return EXIT_OK


# =============================================================================
# DECODE / ENCODE
# =============================================================================

_MAGNITUDES = {
    "latitude": FieldKind.LATITUDE,
    "longitude": FieldKind.LONGITUDE,
    "altitude_value": FieldKind.ALTITUDE,
    "semi_major_confidence": FieldKind.SEMI_AXIS_CONFIDENCE,
    "semi_minor_confidence": FieldKind.SEMI_AXIS_CONFIDENCE,
    "semi_major_orientation": FieldKind.SEMI_MAJOR_ORIENTATION,
    "heading": FieldKind.HEADING,
    "speed": FieldKind.SPEED,
    "vehicle_length": FieldKind.VEHICLE_LENGTH,
    "vehicle_width": FieldKind.VEHICLE_WIDTH,
    "longitudinal_acceleration": FieldKind.LONGITUDINAL_ACCELERATION,
    "vertical_acceleration": FieldKind.VERTICAL_ACCELERATION,
    "curvature": FieldKind.CURVATURE,
    "yaw_rate": FieldKind.YAW_RATE,
    "min_end_time": FieldKind.MIN_END_TIME,
    "delta_latitude": FieldKind.DELTA_LATITUDE,
    "delta_longitude": FieldKind.DELTA_LONGITUDE,
    "dx": FieldKind.NODE_OFFSET,
    "dy": FieldKind.NODE_OFFSET,
}

_INSTANTES = ("detection_time", "reference_time")


def _resumen(msg) -> str:
    h = msg.header
    texto = f"{message_type_name(msg).upper()} estación {h.station_id} (v{h.protocol_version})"
    if message_type_name(msg) == "denm" and msg.situation is not None:
        evento = msg.situation.event_type
        texto += f" causa {evento.cause_code}/{evento.sub_cause_code}"
    return texto


def _anotar(nombre: str, valor) -> str:
    if valor is None:
        return "ausente"
    if isinstance(valor, enum.Enum):
        return f"{int(valor)} ({valor.name})"
    if nombre in _INSTANTES:
        instante = datetime.fromtimestamp(unix_ns_desde_its(valor) / 1e9, tz=timezone.utc)
        return f"{valor} ({instante.isoformat(timespec='milliseconds')})"
    kind = _MAGNITUDES.get(nombre)
    if kind is None:
        return str(valor)
    try:
        si = wire_to_si(kind, valor)
    except RangeViolation:
        return f"{valor} (fuera de rango)"
    if si is UNAVAILABLE:
        return f"{valor} (no disponible)"
    return f"{valor} ({si:.10g} {kind.value.unidad})"


def _lineas_campos(valor, ruta: str = "") -> List[str]:
    """Una línea por campo hoja, con su ruta y su valor en SI cuando lo tiene"""
    if dataclasses.is_dataclass(valor):
        lineas = []
        for campo in dataclasses.fields(valor):
            lineas += _lineas_campos(getattr(valor, campo.name), f"{ruta}.{campo.name}" if ruta else campo.name)
        return lineas
    if isinstance(valor, tuple):
        if not valor:
            return [f"  {ruta} = []"]
        return [linea for i, elemento in enumerate(valor) for linea in _lineas_campos(elemento, f"{ruta}[{i}]")]
    return [f"  {ruta} = {_anotar(ruta.rsplit('.', 1)[-1], valor)}"]


def describir(msg, violaciones) -> str:
    """Mensaje campo a campo seguido del informe de ``validate``"""
    lineas = [_resumen(msg), *_lineas_campos(msg)]
    if violaciones:
        lineas.append(f"validate: {len(violaciones)} violaciones")
        lineas += [f"  {v.path}: {v.reason}" for v in violaciones]
    else:
        lineas.append("validate: correcto")
    return "\n".join(lineas)


def cmd_decode(args, cfg: dict) -> int:
    skip = args.skip if args.skip is not None else cfg["gateway"]["skip_octets"]
    codigo = EXIT_OK
    entradas = args.hex or [linea for linea in sys.stdin.read().split() if linea]
    for texto in entradas:
        try:
            payload = bytes.fromhex(texto)
        except ValueError:
            logger.error(f"❌ hexadecimal inválido: {texto!r}")
            codigo = EXIT_DATOS
            continue
        evento = gw.handle_datagram(payload, 0, ("-", 0), skip)
        violaciones = validate(evento.decoded) if evento.decoded is not None else []
        if args.json:
            datos = gw.evento_a_dict(evento)
            datos.pop("recv_ts")
            datos.pop("source")
            if evento.decoded is not None:
                datos["violations"] = [{"path": v.path, "reason": v.reason} for v in violaciones]
            _escribir(json.dumps(datos, ensure_ascii=False))
        elif evento.decoded is not None:
            _escribir(describir(evento.decoded, violaciones))
        if evento.error is not None:
            logger.error(f"❌ {type(evento.error).__name__}: {evento.error}")
        if evento.error is not None or violaciones:
            codigo = EXIT_DATOS
    return codigo


def cmd_encode(args, cfg: dict) -> int:
    texto = Path(args.archivo).read_text(encoding="utf-8") if args.archivo else sys.stdin.read()
    try:
        datos = json.loads(texto)
    except json.JSONDecodeError as e:
        raise SchemaViolation("$", f"JSON inválido: {e}") from None
    documentos = datos if isinstance(datos, list) else [datos]
    for i, doc in enumerate(documentos):
        if not isinstance(doc, dict) or "type" not in doc:
            raise SchemaViolation(f"[{i}]", "se esperaba un objeto con 'type'")
        cuerpo = doc.get("decoded", {k: v for k, v in doc.items() if k != "type"})
        msg = dataset_io.mensaje_desde_dict(doc["type"], cuerpo)
        _escribir(encode_message(msg).hex())
    return EXIT_OK


# =============================================================================
# ANALYZE
# =============================================================================

def cmd_analyze(args, cfg: dict) -> int:
    acfg = cfg["analyzer"]
    formato = args.format or ("geojson" if args.informe == "traj" else acfg["format"])
    dataset = analyzer.cargar_dataset(args.dataset, verificar=args.verificar)

    if args.informe == "stats":
        report = analyzer.stats(dataset, gap_s=acfg["gap_s"], salto_m=acfg["jump_m"],
                                lead_s=cfg["dataset"]["lead_s"], trail_s=cfg["dataset"]["trail_s"])
        if formato == "csv":
            analyzer.csv_estadisticas(report, sys.stdout)
        elif formato == "json":
            _escribir(json.dumps(report.a_dict(), indent=2, ensure_ascii=False))
        else:
            _escribir(analyzer.tabla_estadisticas(report))
    elif args.informe == "denm":
        filas = analyzer.denm_events(dataset)
        if formato == "csv":
            analyzer.csv_denm(filas, sys.stdout)
        else:
            _escribir(analyzer.tabla_denm(filas))
    elif args.informe == "dims":
        bins = analyzer.vehicle_dims(dataset)
        if formato == "csv":
            analyzer.csv_dimensiones(bins, sys.stdout)
        else:
            _escribir(analyzer.tabla_dimensiones(bins))
    else:
        if args.salida:
            archivos = analyzer.exportar_trayectorias(dataset, args.salida, acfg["gap_s"], acfg["jump_m"])
            logger.info(f"✅ {len(archivos)} archivos GeoJSON en {args.salida}")
        else:
            geojson = analyzer.trajectories(dataset, station_id=args.station_id, station_type=args.station_type,
                                            gap_s=acfg["gap_s"], salto_m=acfg["jump_m"])
            _escribir(json.dumps(geojson, indent=2, ensure_ascii=False))
    return EXIT_OK


# =============================================================================
# SIMULATE / TRIM / JOIN
# =============================================================================

def cmd_simulate(args, cfg: dict) -> int:
    sim = trafficgen.simulate(trafficgen.cargar_config_sim(args.config_sim))
    if args.udp:
        destino_gnss = gw.parse_direccion(args.gnss_dest) if args.gnss_dest else None
        trafficgen.emitir_udp(sim, gw.parse_direccion(args.udp), realtime=cfg["simulate"]["realtime"],
                              destino_gnss=destino_gnss)
    if args.salida:
        archivos = trafficgen.grabar_offline(sim, args.salida, recorder.config_desde_dict(cfg["recorder"]),
                                             tick_s=cfg["recorder"]["tick_s"])
        logger.info(f"💾 {len(archivos)} escenarios escritos en {args.salida}")
    if args.ground_truth:
        trafficgen.guardar_ground_truth(sim.ground_truth, args.ground_truth)
    else:
        _escribir(json.dumps(sim.ground_truth.a_dict(), indent=2, ensure_ascii=False))
    return EXIT_OK


def cmd_trim(args, cfg: dict) -> int:
    dcfg = cfg["dataset"]
    salida = Path(args.salida)
    total = 0
    for ruta in args.escenarios:
        rec = dataset_io.cargar_escenario(ruta)
        partes = dataset_io.trim(rec, dcfg["lead_s"], dcfg["trail_s"], dcfg["gap_s"])
        base = Path(ruta).name[: -len(dataset_io.EXTENSION)] if ruta.endswith(dataset_io.EXTENSION) else Path(ruta).stem
        for i, parte in enumerate(partes):
            dataset_io.guardar_escenario(parte, salida, f"{base}_{i:03d}{dataset_io.EXTENSION}")
        logger.info(f"✂️ {ruta}: {len(partes)} tramos")
        total += len(partes)
    logger.info(f"✅ {total} escenarios recortados en {salida}")
    return EXIT_OK


def cmd_join(args, cfg: dict) -> int:
    recs = [dataset_io.cargar_escenario(ruta) for ruta in args.escenarios]
    unido = dataset_io.join(recs)
    salida = Path(args.salida)
    dataset_io.guardar_escenario(unido, salida.parent, salida.name)
    return EXIT_OK


# =============================================================================
# SERVE
# =============================================================================

def cmd_serve(args, cfg: dict) -> int:
    from app import crear_app

    scfg = cfg["server"]
    aplicacion = crear_app(scfg["dataset"], intervalo=scfg["interval"])
    logger.info(f"🚀 Servidor en http://0.0.0.0:{scfg['port']} (dataset {scfg['dataset']})")
    aplicacion.run(host="0.0.0.0", port=scfg["port"], debug=False)
    return EXIT_OK


# =============================================================================
# PARSER
# =============================================================================

def crear_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="itskit", description="Herramientas V2X: gateway, grabación, análisis y simulación")
    parser.add_argument("--config", help="Archivo de configuración JSON (o ITSKIT_CONFIG)")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR (o ITSKIT_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="comando", required=True, parser_class=_Parser)

    p = sub.add_parser("gateway", help="Recibe y decodifica mensajes por UDP")
    p.add_argument("--listen")
    p.add_argument("--skip-octets", dest="skip", type=int, help="Octetos de cabecera a saltar")
    p.add_argument("--out", dest="salida", help="Graba los eventos en este directorio")
    p.add_argument("--forward", help="Reenvía los payloads a HOST:PUERTO")
    p.add_argument("--webhook", help="URL o nombre de endpoint configurado")
    p.add_argument("--quiet", action="store_true", help="No imprime los eventos")
    p.set_defaults(funcion=cmd_gateway, opciones=lambda a: {
        "gateway.listen": a.listen, "gateway.skip_octets": a.skip,
        "gateway.forward": a.forward, "gateway.webhook": a.webhook,
    })

    p = sub.add_parser("record", help="Graba escenarios a partir del gateway")
    p.add_argument("--out", dest="salida", required=True, help="Directorio de salida")
    p.add_argument("--listen")
    p.add_argument("--skip-octets", dest="skip", type=int)
    p.add_argument("--forward")
    p.add_argument("--webhook")
    p.add_argument("--mode", choices=recorder.MODOS)
    p.add_argument("--dt-a", type=float)
    p.add_argument("--dt-b", type=float)
    p.add_argument("--d-min", type=float)
    p.add_argument("--gnss-listen")
    p.add_argument("--position", type=float, nargs="+", metavar="GRADOS", help="lat lon [alt]")
    p.add_argument("--location")
    p.set_defaults(funcion=cmd_record, opciones=lambda a: {
        "gateway.listen": a.listen, "gateway.skip_octets": a.skip,
        "gateway.forward": a.forward, "gateway.webhook": a.webhook,
        "recorder.mode": a.mode, "recorder.dt_a": a.dt_a, "recorder.dt_b": a.dt_b,
        "recorder.d_min": a.d_min, "recorder.gnss_listen": a.gnss_listen,
        "recorder.position": a.position, "recorder.location": a.location,
    })

    p = sub.add_parser("decode", help="Decodifica payloads en hexadecimal (argumentos o stdin)")
    p.add_argument("hex", nargs="*")
    p.add_argument("--json", action="store_true")
    p.add_argument("--skip-octets", dest="skip", type=int)
    p.set_defaults(funcion=cmd_decode, opciones=lambda a: {})

    p = sub.add_parser("encode", help="Codifica el esquema decodificado (JSON con 'type')")
    p.add_argument("archivo", nargs="?")
    p.set_defaults(funcion=cmd_encode, opciones=lambda a: {})

    p = sub.add_parser("analyze", help="Informes del dataset")
    p.add_argument("informe", choices=("stats", "denm", "dims", "traj"))
    p.add_argument("dataset")
    p.add_argument("--format", choices=("table", "csv", "json", "geojson"))
    p.add_argument("--gap", type=float)
    p.add_argument("--jump", type=float)
    p.add_argument("--station-id", type=int)
    p.add_argument("--station-type", type=int)
    p.add_argument("--out", dest="salida", help="traj: directorio para exportar los GeoJSON")
    p.add_argument("--verificar", action="store_true", help="Re-decodifica cada payload")
    p.set_defaults(funcion=cmd_analyze, opciones=lambda a: {"analyzer.gap_s": a.gap, "analyzer.jump_m": a.jump})

    p = sub.add_parser("simulate", help="Genera tráfico sintético")
    p.add_argument("--config", dest="config_sim", required=True, help="Configuración de la simulación (JSON)")
    p.add_argument("--udp", help="Envía por UDP a HOST:PUERTO")
    p.add_argument("--gnss-dest", help="Envía la traza GNSS propia a HOST:PUERTO")
    p.add_argument("--realtime", action="store_true", default=None)
    p.add_argument("--out", dest="salida", help="Graba offline en este directorio")
    p.add_argument("--ground-truth", help="Archivo JSON de verdad de referencia")
    p.set_defaults(funcion=cmd_simulate, opciones=lambda a: {"simulate.realtime": a.realtime})

    p = sub.add_parser("trim", help="Recorta escenarios a los tramos con V2X")
    p.add_argument("escenarios", nargs="+")
    p.add_argument("-o", "--out", dest="salida", required=True)
    p.add_argument("--lead", type=float)
    p.add_argument("--trail", type=float)
    p.add_argument("--gap", type=float)
    p.set_defaults(funcion=cmd_trim, opciones=lambda a: {
        "dataset.lead_s": a.lead, "dataset.trail_s": a.trail, "dataset.gap_s": a.gap,
    })

    p = sub.add_parser("join", help="Une escenarios contiguos")
    p.add_argument("escenarios", nargs="+")
    p.add_argument("-o", "--out", dest="salida", required=True)
    p.set_defaults(funcion=cmd_join, opciones=lambda a: {})

    p = sub.add_parser("serve", help="Servidor HTTP de solo lectura")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--port", type=int)
    p.add_argument("--interval", type=int)
    p.set_defaults(funcion=cmd_serve, opciones=lambda a: {
        "server.dataset": a.dataset, "server.port": a.port, "server.interval": a.interval,
    })
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = crear_parser()
    args = parser.parse_args(argv)
    try:
        configuracion.configurar_logging(args.log_level)
        cfg = configuracion.cargar_config(args.config)
        cfg = configuracion.aplicar_opciones(cfg, args.opciones(args))
        return args.funcion(args, cfg)
    except (ConfigError, BindFailure) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USO
    except ItsKitError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATOS
    except OSError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATOS
    except KeyboardInterrupt:
        logger.info("🛑 Interrumpido por el usuario")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
