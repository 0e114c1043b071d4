#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Dense tensor container files.

Rolls and prepared training chunks are stored as deflate-compressed zip files
holding one `.npy` member per array plus a `header` member containing a JSON
document. This is the same layout as the `.npz` files written by NumPy, so the
files can be inspected with :func:`numpy.load`, but the zip entries are written
with a fixed timestamp so that identical content produces identical bytes.
"""

import io
import json
import zipfile
from typing import Dict, Tuple

import numpy as np
import numpy.typing as np_type


_FIXED_DATE_TIME = (1980, 1, 1, 0, 0, 0)
_HEADER_KEY = "header"


def write_archive(path, header: dict,
                  arrays: Dict[str, np_type.NDArray]) -> None:
    """
    Write arrays and a header to a container file.

    Parameters
    ----------
    path : str or path-like
        Destination file name.
    header : dict
        JSON serializable metadata stored alongside the arrays.
    arrays : dict
        Mapping from member name to array. Object arrays are not allowed.

    Raises
    ------
    ValueError
        When a member is named `header` or holds an object array.
    """
    if _HEADER_KEY in arrays:
        raise ValueError(f"Array name '{_HEADER_KEY}' is reserved")

    members = {_HEADER_KEY: np.array(json.dumps(header, sort_keys=True))}
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype.hasobject:
            raise ValueError(f"Cannot store object array '{name}'")
        members[name] = arr

    with zipfile.ZipFile(path, mode="w",
                         compression=zipfile.ZIP_DEFLATED) as zf:
        for name, arr in members.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=_FIXED_DATE_TIME)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            buffer = io.BytesIO()
            np.lib.format.write_array(buffer, arr, allow_pickle=False)
            zf.writestr(info, buffer.getvalue())


def read_archive(path) -> Tuple[dict, Dict[str, np_type.NDArray]]:
    """
    Read a container file written by :func:`write_archive`.

    Parameters
    ----------
    path : str or path-like
        File to read.

    Returns
    -------
    2-tuple
        Header dictionary and mapping from member name to array.

    Raises
    ------
    IOError
        When the file is not a valid container.
    """
    try:
        with np.load(path, allow_pickle=False) as npz:
            header = json.loads(str(npz[_HEADER_KEY]))
            arrays = {name: npz[name] for name in npz.files
                      if name != _HEADER_KEY}
    except (KeyError, ValueError, zipfile.BadZipFile, EOFError) as exc:
        raise IOError(f"Invalid container file {path}: {exc}") from exc
    return header, arrays
