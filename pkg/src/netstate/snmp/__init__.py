"""Minimal SNMP v2c: BER codec subset, UDP client, poll scheduler."""
