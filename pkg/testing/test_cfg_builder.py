import itertools

from core import abstract_value as av
from core.abstract_value import TOP
from core.disassembler import disassemble
from core.stack_emulator import AbstractState, fold_binary, join_states, step
from testing.contract_assembler import ContractBuilder, assemble


def run(source, state=None):
    state = state or AbstractState()
    for ins in disassemble(assemble(source)):
        state = step(state, ins)
    return state


# ============================================================================
# BLOCKS AND EDGES
# ============================================================================

def test_jumpi_has_taken_and_fallthrough_successors(cfg_of):
    cfg = cfg_of(assemble("PUSH1 0x01 @yes JUMPI PUSH1 0x00 STOP :yes PUSH1 0x02 STOP"))

    assert len(cfg) == 3
    assert cfg.blocks[0].successors == [1, 2]
    assert cfg.blocks[1].successors == []
    assert cfg.unresolved_jumps == []


def test_calldata_jump_target_is_unresolved(cfg_of):
    cfg = cfg_of(assemble("PUSH1 0x00 CALLDATALOAD JUMP :x STOP"))

    assert cfg.unresolved_jumps == [0]
    assert cfg.blocks[0].successors == []
    assert "unresolved-jump" in {d.code for d in cfg.diagnostics}


def test_constant_target_that_is_not_a_jumpdest(cfg_of):
    cfg = cfg_of(assemble("PUSH1 0x03 JUMP STOP"))

    assert cfg.blocks[0].successors == []
    assert "invalid-jump-target" in {d.code for d in cfg.diagnostics}


def test_shared_subroutine_returns_to_every_caller(cfg_of):
    builder = ContractBuilder()
    builder.internal("shared", "PUSH1 0x01 POP")
    builder.function(0xAAAAAAAA, builder.invoke("shared"))
    builder.function(0xBBBBBBBB, builder.invoke("shared"))
    cfg = cfg_of(builder.build())

    returns = [
        block for block in cfg.blocks
        if block.last.name == "JUMP" and len(block.successors) == 2
    ]
    assert len(returns) == 1
    for succ in returns[0].successors:
        assert cfg.blocks[succ].instructions[0].name == "JUMPDEST"


def test_unreached_blocks_keep_structural_edges(cfg_of):
    cfg = cfg_of(assemble("STOP :dead PUSH1 0x00 @end JUMPI :end STOP"))

    assert 1 not in cfg.entry_states
    assert cfg.blocks[1].successors == [2]


def test_networkx_export_matches_edges(cfg_of):
    cfg = cfg_of(assemble("PUSH1 0x01 @yes JUMPI STOP :yes STOP"))
    graph = cfg.to_networkx()

    assert sorted(graph.edges()) == sorted(cfg.edges())
    assert graph.nodes[0]["start_offset"] == 0


# ============================================================================
# ABSTRACT VALUES
# ============================================================================

SAMPLES = [
    av.const(0), av.const(7), av.storage_load(1), av.arg(0), av.arg(1),
    av.calldata_at(0), av.call_return(0x44), av.SELF, av.SENDER, TOP,
]


def test_join_is_a_flat_lattice():
    for a in SAMPLES:
        assert a.join(a) == a
        assert a.join(TOP) == TOP
    for a, b in itertools.product(SAMPLES, repeat=2):
        assert a.join(b) == b.join(a)
        if a != b:
            assert a.join(b) == TOP
    for a, b, c in itertools.product(SAMPLES, repeat=3):
        assert a.join(b).join(c) == a.join(b.join(c))


def test_join_all_of_nothing_is_top():
    assert av.join_all([]) == TOP
    assert av.join_all([av.SELF, av.SELF]) == av.SELF


def test_calldata_offsets_map_to_arguments():
    assert av.calldata_at(4) == av.arg(0)
    assert av.calldata_at(4 + 32 * 3) == av.arg(3)
    assert av.calldata_at(0).is_selector_word
    assert not av.calldata_at(5).is_arg


def test_folding_keeps_provenance_through_masks():
    address_mask = av.const((1 << 160) - 1)

    assert fold_binary("ADD", av.const(2), av.const(3)) == av.const(5)
    assert fold_binary("AND", address_mask, av.SENDER) == av.SENDER
    assert fold_binary("ADD", av.const(0), av.arg(1)) == av.arg(1)
    assert fold_binary("SHR", av.const(0xE0), av.calldata_at(0)).is_selector_word
    assert fold_binary("ADD", av.const(1), av.SELF) == TOP


def test_state_join_pads_shorter_stack():
    left = AbstractState(stack=(av.const(1), av.SELF), free_ptr=0x80)
    right = AbstractState(stack=(av.SELF,), free_ptr=0x80)

    joined = join_states([left, right])

    assert joined.stack == (TOP, av.SELF)
    assert joined.free_ptr == 0x80


# ============================================================================
# MEMORY
# ============================================================================

def test_abi_buffer_keeps_selector_in_front_of_first_argument():
    state = run(
        "PUSH1 0x80 PUSH1 0x40 MSTORE "
        "PUSH1 0x40 MLOAD "
        "PUSH4 0x11223344 PUSH1 0xe0 SHL DUP2 MSTORE "
        "ADDRESS DUP2 PUSH1 0x04 ADD MSTORE"
    )

    assert state.free_ptr == 0x80
    assert state.stack == (av.const(0x80),)
    assert state.memory_word(0x80) == av.const(0x11223344 << 224)
    assert state.memory_word(0x84) == av.SELF


def test_call_result_is_visible_through_returndatacopy():
    state = run(
        "PUSH1 0x20 PUSH2 0x0400 PUSH1 0x00 PUSH1 0x80 PUSH1 0x00 PUSH1 0x01 GAS CALL POP "
        "PUSH1 0x20 PUSH1 0x00 PUSH2 0x0200 RETURNDATACOPY"
    )
    site = 14

    assert state.last_call == site
    assert state.memory_word(0x400) == av.call_return(site)
    assert state.memory_word(0x200) == av.call_return(site)
