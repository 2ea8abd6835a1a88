"""
hrldx core: ontology, simulator, networks, agents, training and evaluation
"""
