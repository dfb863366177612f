# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
__all__ = []

from .common import DnerError, round_half_up
__all__ += ['DnerError', 'round_half_up']

from .entity import Entity, Fragment, Sentence, UniformEntity, UniformRecord
__all__ += ['Entity', 'Fragment', 'Sentence', 'UniformEntity', 'UniformRecord']
