"""
VISOR HTTP DEL DATASET V2X
==========================
Muestra las estadísticas del dataset y sirve informes y trayectorias
GeoJSON. El índice del dataset se relee en segundo plano.

    python itskit.py serve DATASET --port 5000
    gunicorn "app:crear_app()"          # dataset desde ITSKIT_DATASET
"""

import logging
import os
import threading
from dataclasses import asdict
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from flask import Flask, jsonify, render_template_string, request
from flask_cors import CORS

import analyzer
from errores import ItsKitError

logger = logging.getLogger(__name__)


class IndiceDataset:
    """Escenarios cargados y el informe de estadísticas, con su hora de carga"""

    def __init__(self, directorio, intervalo: int = 30):
        self.directorio = Path(directorio)
        self.intervalo = intervalo
        self.escenarios: List[analyzer.Escenario] = []
        self.informe: Optional[analyzer.StatsReport] = None
        self.ultima_actualizacion: Optional[datetime] = None
        self.ultimo_error: Optional[str] = None
        self.estadisticas = {"actualizaciones": 0, "errores": 0}
        self._lock = threading.Lock()
        self._parar = threading.Event()
        self._hilo: Optional[threading.Thread] = None

    def actualizar(self) -> None:
        """Relee el dataset; un fallo deja el índice anterior"""
        with self._lock:
            try:
                escenarios = analyzer.cargar_dataset(self.directorio)
                informe = analyzer.stats(escenarios) if escenarios else None
            except (ItsKitError, OSError) as e:
                self.estadisticas["errores"] += 1
                self.ultimo_error = f"{type(e).__name__}: {e}"
                logger.error(f"❌ Error actualizando el dataset: {self.ultimo_error}")
                return
            self.escenarios = escenarios
            self.informe = informe
            self.ultima_actualizacion = datetime.now()
            self.ultimo_error = None
            self.estadisticas["actualizaciones"] += 1
            logger.info(f"✅ Dataset actualizado: {len(escenarios)} escenarios")

    def _bucle(self):
        logger.info(f"🔄 Actualización automática cada {self.intervalo} segundos")
        while not self._parar.wait(self.intervalo):
            try:
                self.actualizar()
            except Exception as e:
                logger.error(f"❌ Error en bucle: {e}")

    def iniciar(self) -> None:
        if self._hilo is None:
            self._hilo = threading.Thread(target=self._bucle, daemon=True)
            self._hilo.start()

    def detener(self) -> None:
        self._parar.set()
        if self._hilo is not None:
            self._hilo.join(timeout=2)
            self._hilo = None

    def estado(self) -> dict:
        return {
            "status": "online",
            "dataset": str(self.directorio),
            "escenarios": len(self.escenarios),
            "intervalo": self.intervalo,
            "ultima_actualizacion": self.ultima_actualizacion.isoformat() if self.ultima_actualizacion else None,
            "ultimo_error": self.ultimo_error,
            **self.estadisticas,
        }


HTML_TEMPLATE = """
<!DOCTYPE html>
<html lang="es">
<head>
    <meta charset="UTF-8">
    <meta name="viewport" content="width=device-width, initial-scale=1.0">
    <title>itskit - Dataset V2X</title>
    <link href="https://cdn.jsdelivr.net/npm/bootstrap@5.3.0/dist/css/bootstrap.min.css" rel="stylesheet">
</head>
<body class="bg-light p-4">
    <div class="container">
        <h1>📡 Dataset V2X</h1>
        <p class="text-muted">{{ estado.dataset }} · {{ estado.escenarios }} escenarios ·
            actualizado {{ estado.ultima_actualizacion or "nunca" }} · cada {{ estado.intervalo }} s</p>
        {% if informe %}
        <table class="table table-sm table-striped bg-white">
            <thead><tr>{% for c in cabeceras %}<th>{{ c }}</th>{% endfor %}</tr></thead>
            <tbody>
            {% for nombre, fila in filas %}
                <tr><td>{{ nombre }}</td>{% for v in fila %}<td>{{ v }}</td>{% endfor %}</tr>
            {% endfor %}
            </tbody>
        </table>
        {% else %}
        <div class="alert alert-warning">⚠️ El dataset no contiene escenarios</div>
        {% endif %}
        <p>
            <a href="/api/estadisticas">Estadísticas</a> ·
            <a href="/api/denm">DENM</a> ·
            <a href="/api/dimensiones">Dimensiones</a> ·
            <a href="/api/trayectorias/geojson">Trayectorias (GeoJSON)</a>
        </p>
    </div>
</body>
</html>
"""


def crear_app(directorio=None, intervalo: Optional[int] = None, actualizar_en_segundo_plano: bool = True) -> Flask:
    """
    Crea la aplicación Flask

    Args:
        directorio: Raíz del dataset; por defecto ITSKIT_DATASET o "."
        intervalo: Segundos entre relecturas; por defecto INTERVALO_ACTUALIZACION o 30
        actualizar_en_segundo_plano: Arranca el hilo de relectura
    """
    load_dotenv()
    directorio = directorio or os.getenv("ITSKIT_DATASET", ".")
    intervalo = intervalo or int(os.getenv("INTERVALO_ACTUALIZACION", "30"))

    app = Flask(__name__)
    CORS(app)
    indice = IndiceDataset(directorio, intervalo)
    app.config["INDICE"] = indice

    @app.route("/")
    def index():
        """Página principal"""
        informe = indice.informe
        filas = []
        if informe is not None:
            filas = [(n, analyzer.valores_estadisticas(f)) for n, f in informe.categorias.items()]
            filas.append(("Total", analyzer.valores_estadisticas(informe.total)))
        return render_template_string(
            HTML_TEMPLATE,
            estado=indice.estado(),
            informe=informe,
            cabeceras=analyzer.CABECERAS_ESTADISTICAS,
            filas=filas,
        )

    @app.route("/api/estado")
    def api_estado():
        return jsonify(indice.estado())

    @app.route("/api/estadisticas")
    def api_estadisticas():
        if indice.informe is None:
            return jsonify({"success": False, "error": "EmptyDataset: el dataset no contiene escenarios"}), 404
        return jsonify({"success": True, **indice.informe.a_dict()})

    @app.route("/api/denm")
    def api_denm():
        filas = analyzer.denm_events(indice.escenarios)
        return jsonify({"success": True, "filas": [asdict(f) for f in filas], "total": len(filas)})

    @app.route("/api/dimensiones")
    def api_dimensiones():
        bins = analyzer.vehicle_dims(indice.escenarios)
        return jsonify({"success": True, "bins": [asdict(b) for b in bins], "total": len(bins)})

    @app.route("/api/trayectorias/geojson")
    def api_trayectorias():
        """FeatureCollection con filtros opcionales ?station_id= y ?station_type="""
        try:
            station_id = request.args.get("station_id", type=int)
            station_type = request.args.get("station_type", type=int)
            return jsonify(analyzer.trajectories(indice.escenarios, station_id=station_id, station_type=station_type))
        except Exception as e:
            return jsonify({"error": str(e)}), 500

    @app.route("/api/forzar-actualizacion")
    def api_forzar_actualizacion():
        logger.info("🔄 Forzando actualización manual...")
        indice.actualizar()
        if indice.ultimo_error:
            return jsonify({"success": False, "error": indice.ultimo_error}), 500
        return jsonify({
            "success": True,
            "mensaje": "Actualización forzada completada",
            "escenarios": len(indice.escenarios),
            "ultima_actualizacion": indice.ultima_actualizacion.isoformat(),
        })

    indice.actualizar()
    if actualizar_en_segundo_plano:
        indice.iniciar()
    return app


if __name__ == "__main__":
    from config import configurar_logging

    configurar_logging()
    port = int(os.environ.get("PORT", 5000))
    logger.info(f"🌐 Servidor iniciando en puerto {port}")
    crear_app().run(host="0.0.0.0", port=port, debug=False)
