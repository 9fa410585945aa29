"""netstate: SNMP-polled LAN state identification via potential functions."""

__version__ = "0.1.0"
