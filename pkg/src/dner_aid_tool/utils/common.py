# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
"""
Common Function of DNER-Aid-Tool
"""
import gzip
import logging
import os
import tempfile
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path

logger = logging.getLogger(__name__)

LOG_FORMAT = '[%(levelname)s] %(name)s: %(message)s'


##############################################################################
### Error


class DnerError(Exception):
    """Root of every error raised by the toolkit."""


class ParseError(DnerError, ValueError):
    """Malformed input file or record."""
    def __init__(self, msg: str, *, source=None, line: int=None,
                 record_id: str=None, kind: str=None):
        self.msg = msg
        self.source = None if source is None else str(source)
        self.line = line
        self.record_id = record_id
        self.kind = kind
        super().__init__(self._render())

    def _render(self) -> str:
        where = []
        if self.source is not None:
            where.append(self.source)
        if self.kind is not None:
            where.append(f'kind:{self.kind}')
        if self.record_id is not None:
            where.append(f'record:{self.record_id}')
        text = self.msg if not where else f"[{' '.join(where)}] {self.msg}"
        if self.line is not None:
            text += f' (ln:{self.line})'
        return text


class ConsistencyError(DnerError, ValueError):
    """Entity text does not match the tokens it indexes."""


class AlignmentError(DnerError, ValueError):
    """Spans, tokens or record ids fail to line up."""


class ConfigError(DnerError, ValueError):
    """Invalid run configuration."""


class InputError(DnerError, ValueError):
    """Invalid arguments to a computation."""


class UnsupportedError(DnerError, ValueError):
    """Request outside an embedded table or supported range."""


class DomainError(DnerError, ValueError):
    """Argument outside the mathematical domain of an operation."""


##############################################################################
### Function


def round_half_up(value, places: int=2) -> Decimal:
    """Round to a fixed number of decimals, half away from zero."""
    if not isinstance(value, Decimal):
        value = Decimal(repr(value)) if isinstance(value, float) else Decimal(value)
    return value.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def open_text(path, mode: str='rt'):
    """Open a text file, transparently for gzip compressed input."""
    path = Path(path)
    if not path.exists() and 'r' in mode:
        raise OSError(f'Cannot find the file ({path}).')
    if path.suffix == '.gz':
        return gzip.open(path, mode=mode, encoding='utf-8')
    return open(path, mode[0], encoding='utf-8')


def setup_logging(is_verb: bool=False, is_dbg: bool=False):
    """Configure the root logger for the command line."""
    level = logging.WARNING
    if is_verb:
        level = logging.INFO
    if is_dbg:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


class AtomicOutputs:
    """
    Stage output files and publish them together.

    Files are written to temporaries next to their destination and renamed
    on a clean exit of the context. Any exception discards every staged
    file, so a failed command leaves no partial output behind.
    """
    def __init__(self, outdir):
        self.outdir = Path(outdir)
        self._staged = []   # (temp path, final path)

    def __enter__(self):
        self.outdir.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.discard()
        return False

    def write_text(self, name: str, content: str) -> Path:
        final = self.outdir / name
        fd, tmp = tempfile.mkstemp(prefix=f'.{final.name}.', suffix='.tmp',
                                   dir=self.outdir)
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as fp:
            fp.write(content)
        self._staged.append((Path(tmp), final))
        logger.debug('staged %s', final)
        return final

    def commit(self):
        for tmp, final in self._staged:
            os.replace(tmp, final)
        self._staged = []

    def discard(self):
        for tmp, _ in self._staged:
            tmp.unlink(missing_ok=True)
        self._staged = []
