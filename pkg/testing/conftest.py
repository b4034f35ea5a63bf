import pytest

from core.disassembler import Bytecode, disassemble
from core.cfg_builder import build_cfg
from engine.chain_client import ContractId
from engine.contract_analyzer import analyze_bytecode
from engine.detector import detect
from testing.fixture_corpus import corpus, mutants


@pytest.fixture(scope="session")
def corpus_cases():
    return corpus()


@pytest.fixture(scope="session")
def corpus_reports(corpus_cases):
    """{case name: (case, DetectionReport)} for the whole labelled corpus."""
    return {case.name: (case, detect(case.entry, case.analyzer())) for case in corpus_cases}


@pytest.fixture(scope="session")
def mutant_reports():
    return {case.name: (case, detect(case.entry, case.analyzer())) for case in mutants()}


@pytest.fixture
def cfg_of():
    def build(code):
        return build_cfg(disassemble(Bytecode(code)))
    return build


@pytest.fixture
def analysis_of():
    def build(code, contract=None):
        contract = contract or ContractId.for_code(code)
        return analyze_bytecode(Bytecode(code), contract)
    return build
