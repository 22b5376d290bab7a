"""
ERRORES DE ITSKIT
=================
Taxonomía de excepciones compartida por todos los módulos.

Los nombres de las clases son los que se muestran al usuario
(la CLI imprime ``NombreClase: mensaje``), por eso siguen en inglés.
"""


class ItsKitError(Exception):
    """Raíz de todos los errores del proyecto"""


# =============================================================================
# CÓDEC
# =============================================================================

class DecodeError(ItsKitError):
    """Error al decodificar un payload (una de las cinco categorías de abajo)"""


class Truncated(DecodeError):
    """Quedan menos bits de los necesarios"""


class RangeViolation(DecodeError):
    """Valor fuera del rango declarado (al codificar o al decodificar)"""


class UnsupportedExtension(DecodeError):
    """El bit de extensión viene a 1"""


class UnknownMessageId(DecodeError):
    """messageId fuera del perfil {1, 2, 4, 5}"""


class PaddingNonZero(DecodeError):
    """Bits de relleno distintos de cero o datos sobrantes tras el mensaje"""


class Unsupported(ItsKitError):
    """Característica de PER que el perfil no implementa"""


class InvalidMessage(ItsKitError):
    """El mensaje no pasa ``validate``"""

    def __init__(self, violations):
        self.violations = list(violations)
        detalle = "; ".join(f"{v.path}: {v.reason}" for v in self.violations)
        super().__init__(detalle or "mensaje inválido")


# =============================================================================
# RED Y GRABACIÓN
# =============================================================================

class BindFailure(ItsKitError):
    """No se pudo abrir el socket de escucha"""


class SendFailure(ItsKitError):
    """No se pudo enviar el datagrama"""


class NonMonotonicTime(ItsKitError):
    """Entrada con marca de tiempo anterior a la última procesada"""


class DomainError(ItsKitError):
    """Coordenadas fuera de [-90, 90] x [-180, 180]"""


# =============================================================================
# DATASET
# =============================================================================

class SchemaViolation(ItsKitError):
    """Documento de escenario mal formado"""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class VersionMismatch(ItsKitError):
    """format_version desconocida"""


class OverlapError(ItsKitError):
    """Grabaciones solapadas en el tiempo"""


class EmptyDataset(ItsKitError):
    """No hay escenarios que analizar"""


class ConfigError(ItsKitError):
    """Configuración inválida (claves desconocidas, tipos, rangos)"""
