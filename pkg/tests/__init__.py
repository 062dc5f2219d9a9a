# -*- coding: utf-8 -*-
"""smctrl test suite"""
