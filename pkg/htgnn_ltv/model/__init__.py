"""Featurizer, hypergraph, temporal encoder, experts, objective and the composed network."""
