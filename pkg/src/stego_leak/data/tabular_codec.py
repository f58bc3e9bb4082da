"""
One-hot codec for tabular records and row-major packing into secret images.

A fitted :class:`TabularSchema` lays out every attribute as a contiguous slice
of a D-dimensional bit vector. Categorical slices have one bit per observed
value (sorted), numeric slices one bit per equal-frequency quantile bin.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..core.errors import CapacityError, CsvFormatError, SchemaError, SecretFormatError, ShapeError
from ..core.tensor import Tensor

logger = logging.getLogger(__name__)

Record = Dict[str, Union[str, float]]

SCHEMA_HEADER = "STEGO-SCHEMA 1"
DEFAULT_BINS = 32


class AttributeKind(Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class AttributeSpec:
    """What to fit for one column."""
    name: str
    kind: AttributeKind = AttributeKind.CATEGORICAL
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        if self.kind is AttributeKind.NUMERIC and self.bins < 1:
            raise SchemaError(f"numeric attribute needs >= 1 bin, got {self.bins}", attribute=self.name)


@dataclass(frozen=True)
class Attribute:
    """A fitted attribute: vocabulary for categorical, bin edges for numeric."""
    name: str
    kind: AttributeKind
    vocabulary: Tuple[str, ...] = ()
    bin_edges: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind is AttributeKind.CATEGORICAL:
            if not self.vocabulary:
                raise SchemaError("empty vocabulary", attribute=self.name)
            if len(set(self.vocabulary)) != len(self.vocabulary):
                raise SchemaError("vocabulary contains duplicates", attribute=self.name)
        else:
            if len(self.bin_edges) < 2:
                raise SchemaError("numeric attribute needs at least two bin edges", attribute=self.name)
            if any(b <= a for a, b in zip(self.bin_edges, self.bin_edges[1:])):
                raise SchemaError("bin edges must be strictly ascending", attribute=self.name)

    @property
    def width(self) -> int:
        if self.kind is AttributeKind.CATEGORICAL:
            return len(self.vocabulary)
        return len(self.bin_edges) - 1

    def bin_of(self, value: float) -> int:
        """Bin index of a numeric value; out-of-range values clamp to the edge bins."""
        interior = np.asarray(self.bin_edges[1:-1], dtype=np.float64)
        return int(np.searchsorted(interior, value, side="right"))

    def representative(self, index: int) -> float:
        """Midpoint of a numeric bin (its lower edge if the midpoint rounds onto the upper edge)."""
        lo, hi = self.bin_edges[index], self.bin_edges[index + 1]
        mid = lo + (hi - lo) / 2.0
        return mid if lo <= mid < hi else lo


@dataclass(frozen=True)
class TabularSchema:
    attributes: Tuple[Attribute, ...]
    _offsets: Tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.attributes:
            raise SchemaError("schema has no attributes")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute names in schema")
        offsets, total = [], 0
        for attribute in self.attributes:
            offsets.append(total)
            total += attribute.width
        object.__setattr__(self, "_offsets", tuple(offsets))

    @property
    def total_dims(self) -> int:
        return sum(a.width for a in self.attributes)

    @property
    def names(self) -> List[str]:
        return [a.name for a in self.attributes]

    def slices(self) -> List[Tuple[Attribute, slice]]:
        return [
            (attribute, slice(offset, offset + attribute.width))
            for attribute, offset in zip(self.attributes, self._offsets)
        ]


def _parse_number(value: Union[str, float], attribute: str) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise SchemaError("not a number", attribute=attribute, value=value) from None
    if not math.isfinite(number):
        raise SchemaError("non-finite number", attribute=attribute, value=value)
    return number


def _quantile_edges(values: np.ndarray, bins: int) -> Tuple[float, ...]:
    edges = np.quantile(values, np.linspace(0.0, 1.0, bins + 1))
    # collapse ties forward so the bin count survives heavy repeats
    for i in range(1, len(edges)):
        if edges[i] <= edges[i - 1]:
            edges[i] = np.nextafter(edges[i - 1], np.inf)
    return tuple(float(e) for e in edges)


def fit_schema(records: Sequence[Mapping[str, Union[str, float]]], specs: Sequence[AttributeSpec]) -> TabularSchema:
    """
    Fit vocabularies and quantile bin edges from a corpus.

    The result does not depend on record order.

    Args:
        records: Corpus rows keyed by attribute name
        specs: Attributes to include, in slice order

    Returns:
        Fitted schema

    Raises:
        SchemaError: On an empty corpus, a missing attribute or an unparsable number
    """
    if not records:
        raise SchemaError("cannot fit a schema on an empty corpus")
    if not specs:
        raise SchemaError("no attribute specs given")

    attributes = []
    for spec in specs:
        column = []
        for index, record in enumerate(records):
            if spec.name not in record:
                raise SchemaError(f"record {index} has no value", attribute=spec.name)
            column.append(record[spec.name])

        if spec.kind is AttributeKind.CATEGORICAL:
            vocabulary = tuple(sorted({str(v) for v in column}))
            attributes.append(Attribute(spec.name, spec.kind, vocabulary=vocabulary))
        else:
            numbers = np.array([_parse_number(v, spec.name) for v in column], dtype=np.float64)
            attributes.append(Attribute(spec.name, spec.kind, bin_edges=_quantile_edges(numbers, spec.bins)))

    schema = TabularSchema(tuple(attributes))
    logger.debug("Fitted schema: %d attributes, D=%d", len(schema.attributes), schema.total_dims)
    return schema


def encode_record(schema: TabularSchema, record: Mapping[str, Union[str, float]]) -> np.ndarray:
    """
    One-hot encode a record.

    Returns:
        uint8 vector of length D with exactly one active bit per attribute slice

    Raises:
        SchemaError: For a missing attribute or a categorical value outside the vocabulary
    """
    bits = np.zeros(schema.total_dims, dtype=np.uint8)
    for attribute, span in schema.slices():
        if attribute.name not in record:
            raise SchemaError("missing from record", attribute=attribute.name)
        value = record[attribute.name]
        if attribute.kind is AttributeKind.CATEGORICAL:
            try:
                index = attribute.vocabulary.index(str(value))
            except ValueError:
                raise SchemaError("unknown categorical value", attribute=attribute.name, value=value) from None
        else:
            index = attribute.bin_of(_parse_number(value, attribute.name))
        bits[span.start + index] = 1
    return bits


def decode_bits(schema: TabularSchema, values: Union[np.ndarray, Sequence[float]]) -> Record:
    """
    Decode hard or soft bits by taking the argmax of every attribute slice.

    Ties go to the lowest index. Numeric attributes decode to their bin
    representative.

    Raises:
        ShapeError: If the input length is not D
    """
    vector = np.asarray(values, dtype=np.float64).reshape(-1)
    if vector.size != schema.total_dims:
        raise ShapeError("decode_bits", (schema.total_dims,), (vector.size,))
    record: Record = {}
    for attribute, span in schema.slices():
        index = int(np.argmax(vector[span]))
        if attribute.kind is AttributeKind.CATEGORICAL:
            record[attribute.name] = attribute.vocabulary[index]
        else:
            record[attribute.name] = attribute.representative(index)
    return record


@dataclass
class SecretImage:
    """Binary H x W image whose first payload_dims pixels (row-major) carry bits."""
    pixels: np.ndarray
    payload_dims: int

    def __post_init__(self):
        if self.pixels.ndim != 2:
            raise ShapeError("SecretImage pixels", "[H, W]", self.pixels.shape)
        if self.payload_dims > self.pixels.size:
            raise CapacityError("payload longer than image", self.payload_dims, self.pixels.size)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def as_array(self, dtype=np.float64) -> np.ndarray:
        """[1, H, W] array for the networks."""
        return self.pixels.astype(dtype)[None, :, :]


def pack_bits(bits: Union[np.ndarray, Sequence[int]], height: int, width: int) -> SecretImage:
    """
    Place a bit vector row-major from (0, 0); the remainder stays zero.

    Raises:
        CapacityError: If D > H * W
    """
    vector = np.asarray(bits).reshape(-1)
    capacity = height * width
    if vector.size > capacity:
        raise CapacityError(
            f"payload does not fit a {height}x{width} secret image; "
            "use a larger image or split the payload across images",
            vector.size,
            capacity,
        )
    if np.any((vector != 0) & (vector != 1)):
        raise SecretFormatError("bit vector must contain only 0 and 1")
    flat = np.zeros(capacity, dtype=np.uint8)
    flat[: vector.size] = vector
    return SecretImage(flat.reshape(height, width), vector.size)


def unpack_bits(
    image: Union[SecretImage, np.ndarray, Tensor],
    payload_dims: int,
    bit_offset: int = 0,
) -> np.ndarray:
    """
    Read payload_dims values row-major starting at bit_offset.

    Soft values pass through unchanged; binarisation is up to the caller.
    """
    if isinstance(image, SecretImage):
        data = image.pixels
    elif isinstance(image, Tensor):
        data = image.data
    else:
        data = np.asarray(image)
    flat = np.asarray(data, dtype=np.float64).reshape(-1)
    end = bit_offset + payload_dims
    if bit_offset < 0 or end > flat.size:
        raise CapacityError("unpack range exceeds the image", end, flat.size)
    return flat[bit_offset:end].copy()


def pack_records(
    schema: TabularSchema,
    records: Sequence[Mapping[str, Union[str, float]]],
    height: int,
    width: int,
) -> SecretImage:
    """Concatenate several encoded records into one secret image."""
    if not records:
        raise SchemaError("no records to pack")
    bits = np.concatenate([encode_record(schema, r) for r in records])
    return pack_bits(bits, height, width)


def records_per_image_capacity(schema: TabularSchema, height: int, width: int) -> int:
    return (height * width) // schema.total_dims


def save_schema(schema: TabularSchema, path: Union[str, Path]) -> None:
    """
    Persist a schema as text: a version header, then one JSON array per
    attribute ``[name, kind, width, values]``.
    """
    lines = [SCHEMA_HEADER]
    for attribute in schema.attributes:
        values = list(attribute.vocabulary if attribute.kind is AttributeKind.CATEGORICAL else attribute.bin_edges)
        lines.append(json.dumps([attribute.name, attribute.kind.value, attribute.width, values]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_schema(path: Union[str, Path]) -> TabularSchema:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != SCHEMA_HEADER:
        raise SchemaError(f"{path}: missing '{SCHEMA_HEADER}' header")
    attributes = []
    for number, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        try:
            name, kind, width, values = json.loads(line)
            kind = AttributeKind(kind)
        except (ValueError, TypeError) as exc:
            raise SchemaError(f"{path} line {number}: {exc}") from None
        if kind is AttributeKind.CATEGORICAL:
            attribute = Attribute(name, kind, vocabulary=tuple(str(v) for v in values))
        else:
            attribute = Attribute(name, kind, bin_edges=tuple(float(v) for v in values))
        if attribute.width != width:
            raise SchemaError(f"{path} line {number}: width {width} does not match values", attribute=name)
        attributes.append(attribute)
    return TabularSchema(tuple(attributes))


def _csv_header(path: Union[str, Path]) -> List[str]:
    """Header of a CSV after checking that every row has exactly one field per column."""
    header: Optional[List[str]] = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        line = 1
        for row in reader:
            start, line = line, reader.line_num + 1
            if not row:
                continue
            if header is None:
                duplicates = sorted({name for name in row if row.count(name) > 1})
                if duplicates:
                    raise CsvFormatError(f"{path}: duplicate header names {duplicates}", line_number=start)
                header = row
            elif len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: expected {len(header)} fields, saw {len(row)}", line_number=start
                )
    if header is None:
        raise CsvFormatError(f"{path}: no header row", line_number=1)
    return header


def load_csv(path: Union[str, Path], columns: Optional[Sequence[str]] = None) -> List[Dict[str, str]]:
    """
    Read an RFC 4180 CSV with a header row into string-valued records.

    Args:
        path: CSV file
        columns: Columns that must be present in the header

    Raises:
        CsvFormatError: On a duplicate header name, a row with the wrong number
            of fields, or a missing required column
    """
    try:
        header = _csv_header(path)
    except (csv.Error, UnicodeDecodeError) as exc:
        raise CsvFormatError(f"{path}: {exc}") from None

    missing = [c for c in (columns or []) if c not in header]
    if missing:
        raise CsvFormatError(f"{path}: header lacks columns {missing}", line_number=1)

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, index_col=False, skip_blank_lines=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise CsvFormatError(f"{path}: {exc}") from None
    return frame.to_dict(orient="records")


def write_csv(records: Sequence[Mapping[str, Union[str, float]]], path: Union[str, Path], columns: Sequence[str]) -> None:
    """Write records with the given column order."""
    pd.DataFrame(list(records), columns=list(columns)).to_csv(path, index=False)
