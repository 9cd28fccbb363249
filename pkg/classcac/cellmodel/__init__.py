"""Single-cell admission control with multi-level bandwidth adaptation.

The policy lives in :mod:`.policy`; :mod:`.chain`, :mod:`.oracle` and
:mod:`.simulator` evaluate it three independent ways.
"""
