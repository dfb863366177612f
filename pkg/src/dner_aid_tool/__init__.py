# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
__all__ = []
__version__ = '0.1.0'
