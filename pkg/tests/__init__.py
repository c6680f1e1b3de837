"""Tests for Nevanlinna Lab"""
