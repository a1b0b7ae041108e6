"""
Serviço de configuração: leitura e escrita do formato chave=valor
"""
import logging
from pathlib import Path
from typing import Dict, List, Tuple

from pydantic import ValidationError

from models import TREATMENT_PRESETS, ConfigError, Scenario, SimConfig
from services.treatment_service import treatment_service

logger = logging.getLogger(__name__)

LIST_KEYS = {"snapshot_times"}


class ConfigService:
    """Serviço para parse, validação e emissão de SimConfig"""

    def _tokenize(self, text: str) -> Tuple[Dict[str, Tuple[str, int]], List[str]]:
        """Pares chave -> (valor, linha) e erros de sintaxe"""
        entries: Dict[str, Tuple[str, int]] = {}
        errors: List[str] = []
        known = SimConfig.model_fields
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                errors.append(f"linha {number}: esperado chave=valor, obtido '{line}'")
                continue
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                errors.append(f"linha {number}: chave desconhecida '{key}'")
                continue
            if key in entries:
                errors.append(f"linha {number}: chave '{key}' repetida (primeira na linha {entries[key][1]})")
                continue
            entries[key] = (value, number)
        return entries, errors

    @staticmethod
    def _convert(key: str, value: str):
        if key in LIST_KEYS:
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    def parse_config(self, text: str) -> SimConfig:
        """Converte o texto em SimConfig, reportando todas as violações de uma vez"""
        entries, errors = self._tokenize(text)
        data = {key: self._convert(key, value) for key, (value, _) in entries.items()}

        while True:
            try:
                config = SimConfig.model_validate(data)
                break
            except ValidationError as e:
                field_errors = [err for err in e.errors() if err.get("loc")]
                if field_errors:
                    removed = False
                    for err in field_errors:
                        key = str(err["loc"][0])
                        line = entries.get(key, ("", "?"))[1]
                        errors.append(f"linha {line}: {key}: {err['msg']}")
                        removed = data.pop(key, None) is not None or removed
                    if removed:
                        continue
                    config = None
                    break
                for err in e.errors():
                    message = str(err["msg"]).removeprefix("Value error, ")
                    for problem in message.split(" | "):
                        keys = [k.strip() for k in problem.split(":", 1)[0].split("/")]
                        line = next((entries[k][1] for k in keys if k in entries), None)
                        errors.append(f"linha {line}: {problem}" if line else problem)
                config = None
                break

        if errors:
            logger.error(f"Erro ao validar configuração: {len(errors)} problema(s)")
            raise ConfigError(errors)
        return config

    def load_config(self, path: str) -> SimConfig:
        text = Path(path).read_text(encoding="utf-8")
        return self.parse_config(text)

    @staticmethod
    def _format(value) -> str:
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return repr(value)
        if isinstance(value, Scenario):
            return value.value
        if isinstance(value, list):
            return ",".join(repr(float(v)) for v in value)
        return str(value)

    def emit_config(self, config: SimConfig) -> str:
        """Texto chave=valor com todas as chaves definidas, em ordem estável"""
        lines = ["# Configuração da simulação (unidades adimensionais)"]
        for key in SimConfig.model_fields:
            value = getattr(config, key)
            if value is None or (isinstance(value, list) and not value):
                continue
            lines.append(f"{key}={self._format(value)}")
        return "\n".join(lines) + "\n"

    def describe_presets(self) -> str:
        """Cenários, estratégias e parâmetros padrão"""
        lines = ["Cenários:"]
        for scenario in Scenario:
            lines.append(f"  {scenario.value}")
        lines.append("")
        lines.append("Estratégias (período 50, t_init padrão 14):")
        for name in TREATMENT_PRESETS:
            schedule = treatment_service.preset(name)
            if schedule.kind.value == "pulsed":
                detail = f"pulsada t_on={schedule.t_on:g} t_off={schedule.t_off:g} d_p={schedule.d_p:.6g}"
            else:
                detail = f"contínua d_c={schedule.d_c:g}"
            dose = treatment_service.period_dose(schedule)
            lines.append(f"  {name}: {detail} dose/período={dose:.6g}")
        lines.append("")
        lines.append("Parâmetros padrão:")
        defaults = SimConfig()
        for key in SimConfig.model_fields:
            value = getattr(defaults, key)
            if value is None or (isinstance(value, list) and not value):
                continue
            lines.append(f"  {key}={self._format(value)}")
        return "\n".join(lines) + "\n"


# Instância global do serviço de configuração
config_service = ConfigService()
