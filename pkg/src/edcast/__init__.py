"""edcast: ED waiting-room occupancy forecasting from raw event logs."""

__version__ = "0.1.0"
