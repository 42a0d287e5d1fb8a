"""Experiment harness: configuration, runners, reports, selftest and CLI."""
