#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Disentangled pitch and timbre representations of polyphonic music.

This package trains transcription networks whose timbre code is kept free of
pitch information, and uses them to rearrange a composition for the
instruments heard in another clip and to detect instrument activity.
"""
