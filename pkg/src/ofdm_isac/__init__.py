"""Bistatic OFDM joint radar-communication link simulator."""

__version__ = "0.1.0"

from .channel import ChannelScenario, OffsetTuple, PathModel  # noqa: F401
from .frame import (  # noqa: F401
    C0,
    CellRole,
    FrameSpec,
    FreqGrid,
    RadarParams,
    TimeSignal,
    blackman_window,
    radar_parameters,
    validate_pilot_spacing,
)
from .radar import RadarImage, periodogram, pilot_image  # noqa: F401
from .sync import SyncReport, demodulate_frame, synchronize  # noqa: F401
from .tx import build_frame, ofdm_modulate  # noqa: F401
