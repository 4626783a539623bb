"""Payment-channel-network simulator with zero-knowledge public-balance announcements."""

__version__ = "0.1.0"
