"""Problem library: toy oracles and the CWH spacecraft benchmark."""
