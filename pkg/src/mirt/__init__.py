"""Restricted mixed ray transform on 2-tensor fields."""
