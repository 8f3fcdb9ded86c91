"""Figure generation from simulator CSV outputs: battery timelines with
completion markers, and completion-time curves over channel availability."""

from .render import plot_battery_timeseries, plot_completion_vs_pon

__version__ = "0.1.0"
