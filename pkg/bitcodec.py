"""
PRIMITIVAS UPER
===============
Subconjunto de ITU-T X.691 (PER no alineado) suficiente para el perfil de
mensajes: enteros acotados, determinantes de longitud, bits de presencia,
cadenas de bits/octetos de tamaño fijo y el bit de extensión.

Todos los campos de varios bits se escriben en big-endian.

``Grupo`` agrupa enteros acotados consecutivos: el códec de mensajes los
lee y escribe de una vez en lugar de campo a campo.
"""

from typing import Iterable, List, Sequence, Tuple

from bitstring import Bits

from errores import RangeViolation, Truncated, Unsupported, UnsupportedExtension

LIMITE_RANGO = 1 << 63
LIMITE_LONGITUD = 16384


class BitBuffer:
    """
    Secuencia de bits que crece por el final, con cursor de lectura.

    Escribir solo añade; leer solo mueve el cursor. El contenido se guarda
    como entero sin signo de ``len(buf)`` bits; ``bitstring`` hace la
    conversión desde y hacia octetos o cadenas binarias.
    """

    __slots__ = ("_valor", "_n", "_pos")

    def __init__(self, datos: bytes = b""):
        self._valor, self._n, self._pos = 0, 0, 0
        if datos:
            self._cargar(Bits(bytes=datos))

    @classmethod
    def desde_bin(cls, cadena: str) -> "BitBuffer":
        """Crea un buffer a partir de una cadena de '0' y '1'"""
        buf = cls()
        if cadena:
            buf._cargar(Bits(bin=cadena))
        return buf

    def _cargar(self, bits: Bits) -> None:
        self._valor, self._n = bits.uint, bits.len

    def _vista(self) -> Bits:
        return Bits(uint=self._valor, length=self._n) if self._n else Bits()

    @property
    def bits(self) -> str:
        return self._vista().bin

    @property
    def read_cursor(self) -> int:
        return self._pos

    def __len__(self) -> int:
        return self._n

    def restantes(self) -> int:
        """Bits aún sin leer"""
        return self._n - self._pos

    def escribir(self, valor: int, n: int) -> None:
        """Añade ``valor`` como entero sin signo de ``n`` bits"""
        if n == 0:
            return
        if valor < 0 or valor >> n:
            raise RangeViolation(f"{valor} no cabe en {n} bits")
        self._valor = (self._valor << n) | valor
        self._n += n

    def leer(self, n: int) -> int:
        """Lee ``n`` bits como entero sin signo"""
        if n == 0:
            return 0
        if self._n - self._pos < n:
            raise Truncated(
                f"se necesitan {n} bits en la posición {self._pos}, quedan {self._n - self._pos}"
            )
        self._pos += n
        return (self._valor >> (self._n - self._pos)) & ((1 << n) - 1)

    def escribir_octetos(self, datos: bytes) -> None:
        if datos:
            bits = Bits(bytes=datos)
            self.escribir(bits.uint, bits.len)

    def leer_octetos(self, n: int) -> bytes:
        if n == 0:
            return b""
        if self.restantes() < 8 * n:
            raise Truncated(f"se necesitan {n} octetos, quedan {self.restantes()} bits")
        return Bits(uint=self.leer(8 * n), length=8 * n).bytes

    def to_bytes(self) -> bytes:
        """Contenido completo; el último octeto parcial se rellena con ceros"""
        return self._vista().tobytes()


def bits_necesarios(lo: int, hi: int) -> int:
    """ceil(log2(hi - lo + 1)); 0 cuando el rango tiene un solo valor"""
    return (hi - lo).bit_length()


def _comprobar_rango(lo: int, hi: int) -> None:
    if lo > hi:
        raise RangeViolation(f"rango vacío [{lo}, {hi}]")
    if hi - lo >= LIMITE_RANGO:
        raise Unsupported(f"rango [{lo}, {hi}] demasiado amplio")


def write_constrained_int(buf: BitBuffer, value: int, lo: int, hi: int) -> None:
    """
    Escribe un entero acotado (constrained whole number)

    Args:
        buf: Buffer destino
        value: Valor a escribir
        lo: Límite inferior del rango
        hi: Límite superior del rango

    Raises:
        RangeViolation: Si value está fuera de [lo, hi]
    """
    _comprobar_rango(lo, hi)
    if not lo <= value <= hi:
        raise RangeViolation(f"{value} fuera de [{lo}, {hi}]")
    buf.escribir(value - lo, bits_necesarios(lo, hi))


def read_constrained_int(buf: BitBuffer, lo: int, hi: int) -> int:
    """
    Lee un entero acotado escrito con ``write_constrained_int``

    Raises:
        Truncated: Si no quedan bits suficientes
        RangeViolation: Si el desplazamiento leído excede hi - lo
    """
    _comprobar_rango(lo, hi)
    desplazamiento = buf.leer(bits_necesarios(lo, hi))
    if desplazamiento > hi - lo:
        raise RangeViolation(f"{lo + desplazamiento} fuera de [{lo}, {hi}]")
    return lo + desplazamiento


def write_length_determinant(buf: BitBuffer, n: int) -> None:
    """
    Determinante de longitud general (caso no acotado, sin fragmentación)

    n < 128 → '0' + 7 bits; 128 ≤ n < 16384 → '10' + 14 bits
    """
    if n < 0:
        raise RangeViolation(f"longitud negativa: {n}")
    if n >= LIMITE_LONGITUD:
        raise Unsupported(f"longitud {n} requiere fragmentación")
    if n < 128:
        buf.escribir(n, 8)
    else:
        buf.escribir(0b10, 2)
        buf.escribir(n, 14)


def read_length_determinant(buf: BitBuffer) -> int:
    if buf.leer(1) == 0:
        return buf.leer(7)
    if buf.leer(1) == 0:
        return buf.leer(14)
    raise Unsupported("determinante de longitud fragmentado")


def write_optional_flags(buf: BitBuffer, present: Sequence[bool]) -> None:
    """Un bit por campo opcional, en orden de declaración (1 = presente)"""
    for flag in present:
        buf.escribir(1 if flag else 0, 1)


def read_optional_flags(buf: BitBuffer, n: int) -> List[bool]:
    return [buf.leer(1) == 1 for _ in range(n)]


def write_boolean(buf: BitBuffer, value: bool) -> None:
    buf.escribir(1 if value else 0, 1)


def read_boolean(buf: BitBuffer) -> bool:
    return buf.leer(1) == 1


def write_enumerated(buf: BitBuffer, value: int, n_valores: int) -> None:
    """ENUMERATED sin extensión: índice como entero acotado en [0, n_valores - 1]"""
    write_constrained_int(buf, int(value), 0, n_valores - 1)


def read_enumerated(buf: BitBuffer, n_valores: int) -> int:
    return read_constrained_int(buf, 0, n_valores - 1)


def write_bitstring(buf: BitBuffer, value: int, n: int) -> None:
    """BIT STRING de tamaño fijo ``n``, representado como entero"""
    if not 0 <= value < (1 << n):
        raise RangeViolation(f"{value} no cabe en {n} bits")
    buf.escribir(value, n)


def read_bitstring(buf: BitBuffer, n: int) -> int:
    return buf.leer(n)


def write_octets(buf: BitBuffer, data: bytes) -> None:
    """OCTET STRING de tamaño fijo, sin alinear"""
    buf.escribir_octetos(data)


def read_octets(buf: BitBuffer, n: int) -> bytes:
    return buf.leer_octetos(n)


def write_extension_bit(buf: BitBuffer) -> None:
    """El perfil nunca usa extensiones: siempre 0"""
    buf.escribir(0, 1)


def read_extension_bit(buf: BitBuffer) -> None:
    posicion = buf.read_cursor
    if buf.leer(1) == 1:
        raise UnsupportedExtension(f"bit de extensión activo en la posición {posicion}")


# =============================================================================
# GRUPOS DE CAMPOS
# =============================================================================

class Grupo:
    """
    Enteros acotados consecutivos con desplazamientos precalculados

    Los bits de extensión se declaran como campos [0, 1] cuyos índices van
    en ``extensiones``: leídos a 1 lanzan ``UnsupportedExtension``.
    """

    __slots__ = ("rangos", "extensiones", "total", "_campos")

    def __init__(self, rangos: Sequence[Tuple[int, int]], extensiones: Iterable[int] = ()):
        for lo, hi in rangos:
            _comprobar_rango(lo, hi)
        self.rangos = tuple(rangos)
        self.extensiones = frozenset(extensiones)
        anchos = [bits_necesarios(lo, hi) for lo, hi in self.rangos]
        self.total = sum(anchos)

        campos = []
        inicio = 0
        for i, ((lo, hi), ancho) in enumerate(zip(self.rangos, anchos)):
            inicio += ancho
            campos.append((self.total - inicio, (1 << ancho) - 1, lo, hi - lo, i in self.extensiones, inicio - ancho))
        self._campos = tuple(campos)

    def __len__(self) -> int:
        return len(self.rangos)


def write_constrained_group(buf: BitBuffer, grupo: Grupo, valores: Sequence[int]) -> None:
    """
    Escribe los valores de un grupo con una sola operación sobre el buffer

    Raises:
        RangeViolation: Si algún valor cae fuera de su rango (el primero en orden)
    """
    if len(valores) != len(grupo.rangos):
        raise ValueError(f"el grupo tiene {len(grupo.rangos)} campos, llegaron {len(valores)}")
    bloque = 0
    for (_, mascara, lo, amplitud, _, _), valor in zip(grupo._campos, valores):
        if not 0 <= valor - lo <= amplitud:
            raise RangeViolation(f"{valor} fuera de [{lo}, {lo + amplitud}]")
        bloque = (bloque << mascara.bit_length()) | (valor - lo)
    buf.escribir(bloque, grupo.total)


def read_constrained_group(buf: BitBuffer, grupo: Grupo) -> List[int]:
    """
    Lee un grupo escrito con ``write_constrained_group``

    Los errores aparecen en el mismo orden que leyendo campo a campo: si no
    quedan bits para el grupo entero se lee campo a campo hasta el que falte.

    Raises:
        Truncated: Si no quedan bits suficientes
        UnsupportedExtension: Si un bit de extensión vale 1
        RangeViolation: Si un desplazamiento leído excede hi - lo
    """
    if buf.restantes() < grupo.total:
        return _leer_campo_a_campo(buf, grupo)
    origen = buf.read_cursor
    bloque = buf.leer(grupo.total)
    valores = []
    for desplazamiento, mascara, lo, amplitud, extension, inicio in grupo._campos:
        v = (bloque >> desplazamiento) & mascara
        if extension and v:
            raise UnsupportedExtension(f"bit de extensión activo en la posición {origen + inicio}")
        if v > amplitud:
            raise RangeViolation(f"{lo + v} fuera de [{lo}, {lo + amplitud}]")
        valores.append(lo + v)
    return valores


def _leer_campo_a_campo(buf: BitBuffer, grupo: Grupo) -> List[int]:
    valores = []
    for i, (lo, hi) in enumerate(grupo.rangos):
        if i in grupo.extensiones:
            read_extension_bit(buf)
            valores.append(0)
        else:
            valores.append(read_constrained_int(buf, lo, hi))
    return valores


def write_constrained_series(buf: BitBuffer, valores: Sequence[int], lo: int, hi: int) -> None:
    """N enteros del mismo rango seguidos, en una sola escritura"""
    _comprobar_rango(lo, hi)
    ancho = bits_necesarios(lo, hi)
    bloque = 0
    for valor in valores:
        if not lo <= valor <= hi:
            raise RangeViolation(f"{valor} fuera de [{lo}, {hi}]")
        bloque = (bloque << ancho) | (valor - lo)
    buf.escribir(bloque, ancho * len(valores))


def read_constrained_series(buf: BitBuffer, n: int, lo: int, hi: int) -> List[int]:
    _comprobar_rango(lo, hi)
    ancho = bits_necesarios(lo, hi)
    if ancho == 0:
        return [lo] * n
    if buf.restantes() < ancho * n:
        return [read_constrained_int(buf, lo, hi) for _ in range(n)]
    bloque = buf.leer(ancho * n)
    mascara = (1 << ancho) - 1
    valores = []
    for desplazamiento in range(ancho * (n - 1), -1, -ancho):
        v = (bloque >> desplazamiento) & mascara
        if v > hi - lo:
            raise RangeViolation(f"{lo + v} fuera de [{lo}, {hi}]")
        valores.append(lo + v)
    return valores
