"""
Serviços do simulador de tumor e angiogênese
"""
