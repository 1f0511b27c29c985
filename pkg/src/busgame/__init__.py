"""Directed-location bus competition games on a circular route."""
