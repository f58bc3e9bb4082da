"""
Secret-image manifest: which record lives in which image, at which bit offset.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union

import pandas as pd

from ..core.errors import CapacityError, CsvFormatError
from .tabular_codec import load_csv

MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ["record_index", "filename", "payload_dims", "bit_offset"]


@dataclass(frozen=True)
class ManifestEntry:
    record_index: int
    filename: str
    payload_dims: int
    bit_offset: int = 0


def plan_images(
    n_records: int,
    payload_dims: int,
    height: int,
    width: int,
    records_per_image: int = 1,
    stem: str = "secret",
) -> List[ManifestEntry]:
    """
    Assign records to secret images, records_per_image at a time.

    Raises:
        CapacityError: If records_per_image records of D bits exceed H * W
    """
    if records_per_image < 1:
        raise CapacityError("records_per_image must be >= 1", records_per_image, 1)
    required = payload_dims * records_per_image
    if required > height * width:
        raise CapacityError(
            f"{records_per_image} record(s) of D={payload_dims} do not fit a {height}x{width} secret image",
            required,
            height * width,
        )
    width_digits = max(5, len(str(n_records)))
    entries = []
    for index in range(n_records):
        image_index, slot = divmod(index, records_per_image)
        entries.append(
            ManifestEntry(
                record_index=index,
                filename=f"{stem}_{image_index:0{width_digits}d}.png",
                payload_dims=payload_dims,
                bit_offset=slot * payload_dims,
            )
        )
    return entries


def group_by_image(entries: Sequence[ManifestEntry]) -> Dict[str, List[ManifestEntry]]:
    """Entries grouped per filename, each group sorted by bit offset."""
    groups: Dict[str, List[ManifestEntry]] = {}
    for entry in entries:
        groups.setdefault(entry.filename, []).append(entry)
    return {name: sorted(group, key=lambda e: e.bit_offset) for name, group in sorted(groups.items())}


def write_manifest(entries: Sequence[ManifestEntry], path: Union[str, Path]) -> None:
    frame = pd.DataFrame(
        [(e.record_index, e.filename, e.payload_dims, e.bit_offset) for e in entries],
        columns=MANIFEST_COLUMNS,
    )
    frame.to_csv(path, index=False)


def read_manifest(path: Union[str, Path]) -> List[ManifestEntry]:
    """
    Read a manifest; a missing bit_offset column means one record per image.

    Raises:
        CsvFormatError: If the file is not well-formed CSV, required columns are
            missing or values are not integers
    """
    rows = load_csv(path, columns=MANIFEST_COLUMNS[:3])

    entries = []
    for row_number, row in enumerate(rows, start=2):
        try:
            entries.append(
                ManifestEntry(
                    record_index=int(row["record_index"]),
                    filename=row["filename"],
                    payload_dims=int(row["payload_dims"]),
                    bit_offset=int(row.get("bit_offset", 0)),
                )
            )
        except ValueError:
            raise CsvFormatError(f"{path}: non-integer manifest field", line_number=row_number) from None
    return entries
