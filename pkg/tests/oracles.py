"""Brute-force reference implementations used only by the tests.

Deliberately naive and independent of the package's grounder, evaluator and
enumerator: grounding is a plain product over the universe, fixpoints are
recomputed from scratch every round and stability is checked by trying
every subset.
"""
import itertools

from aspcomp.language import Variable


def _subst(atom, sub):
    return (atom.predicate, tuple(sub[t.name] if isinstance(t, Variable) else t for t in atom.args))


def naive_ground(rules, universe):
    """Yield (heads, pos, neg) triples of ground (pred, args) keys."""
    consts = sorted(universe, key=lambda c: (isinstance(c, str), c))
    for r in rules:
        names = sorted({t.name for a in r.atoms() for t in a.args if isinstance(t, Variable)})
        for values in itertools.product(consts, repeat=len(names)):
            sub = dict(zip(names, values))
            yield (frozenset(_subst(a, sub) for a in r.head),
                   frozenset(_subst(l.atom, sub) for l in r.body if l.positive),
                   frozenset(_subst(l.atom, sub) for l in r.body if not l.positive))


def _key(atom):
    return (atom.predicate, tuple(atom.args))


def strata_levels(rules):
    heads = {a.predicate for r in rules for a in r.head}
    level = {p: 0 for p in heads}
    for _ in range(len(heads) + 2):
        changed = False
        for r in rules:
            for h in r.head:
                for l in r.body:
                    q = l.predicate
                    if q not in heads:
                        continue
                    need = level[q] + (0 if l.positive else 1)
                    if level[h.predicate] < need:
                        level[h.predicate] = need
                        changed = True
        if not changed:
            return level
    return None  # not stratified


def naive_stratified_model(program, base=()):
    """Perfect model of a normal stratified program over the extra facts
    ``base``; returns a set of (pred, args) keys, or None if a constraint
    is violated."""
    rules = [r for r in program.rules if r.head]
    level = strata_levels(rules)
    assert level is not None, "oracle needs a stratified program"
    universe = set(program.universe) | {c for a in base for c in a.args}
    ground = list(naive_ground(rules, universe))
    model = {_key(a) for a in base}
    for k in sorted(set(level.values())):
        layer = [g for g in ground if any(level[h[0]] == k for h in g[0])]
        while True:
            derived = set()
            for heads, pos, neg in layer:
                if pos <= model and not (neg & model):
                    derived |= heads
            if derived <= model:
                break
            model |= derived
    for heads, pos, neg in naive_ground([r for r in program.rules if not r.head], universe):
        if pos <= model and not (neg & model):
            return None
    return model


def violated_instances(constraints, model_keys, universe):
    out = set()
    for _, pos, neg in naive_ground(constraints, universe):
        if pos <= model_keys and not (neg & model_keys):
            out.add((pos, neg))
    return out


def brute_answer_sets(program, limit=16):
    """All answer sets by subset enumeration (only for tiny programs)."""
    ground = list(naive_ground(program.rules, program.universe))
    atoms = sorted({h for g in ground for h in g[0]}, key=repr)
    assert len(atoms) <= limit, f"{len(atoms)} atoms is too many for brute force"
    out = []
    for bits in itertools.product((False, True), repeat=len(atoms)):
        I = frozenset(a for a, b in zip(atoms, bits) if b)
        if _is_model(ground, I) and _minimal(ground, I):
            out.append(I)
    return out


def _is_model(ground, I):
    return all(heads & I or not (pos <= I and not (neg & I)) for heads, pos, neg in ground)


def _minimal(ground, I):
    reduct = [(heads, pos) for heads, pos, neg in ground if not (neg & I)]
    members = sorted(I, key=repr)
    for n in range(len(members)):
        for J in itertools.combinations(members, n):
            J = frozenset(J)
            if all(heads & J or not pos <= J for heads, pos in reduct):
                return False
    return True


def keys(atoms):
    return {_key(a) for a in atoms}
