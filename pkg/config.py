"""
Configurações de processo do simulador
"""
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Configurações de verbosidade carregadas de variáveis de ambiente

    Parâmetros científicos nunca vêm do ambiente: só do arquivo de
    configuração da simulação (ver services/config_service.py).
    """

    # Logging
    log_level: str = "INFO"

    # Linha de progresso a cada N macro-passos (0 desliga)
    progress_every: int = 50

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="ANGIOSIM_",
        case_sensitive=False,
        extra="ignore",
    )


# Instância global de configurações
settings = Settings()
