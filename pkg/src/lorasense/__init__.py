"""Traffic-level sensing from multi-gateway LoRaWAN RSSI."""
__version__ = "0.1.0"
