# -*- coding: utf-8 -*-
"""
Max-flow / min-cut dinamico (Boykov-Kolmogorov) con riuso del residuo e
degli alberi di ricerca.

Il grafo residuo e gli alberi S / T persistono tra una soluzione e l'altra:
le modifiche di capacita' aggiornano il residuo esistente e segnano i nodi
toccati. All'inizio di solve() solo i nodi segnati vengono riallineati
(cambio di albero, orfani, nodi attivi); il resto degli alberi resta valido e
il solver riparte dal flusso gia' spinto. Se una capacita' scende sotto il
flusso che la attraversa si applica la riparametrizzazione dei graph cut
dinamici: l'eccesso viene scaricato sui link terminali dei due estremi, il
valore del taglio minimo resta corretto.

Convenzioni (come add_tweights di BK):
  - tr[u] > 0  residuo sorgente -> u
  - tr[u] < 0  residuo u -> pozzo (in valore assoluto)
  - etichette finali: albero T = lato pozzo (inside), il resto lato sorgente.

Capacita' intere: i tagli sono esatti.
"""
from __future__ import annotations

import logging
from collections import deque
from typing import Dict, Hashable, Iterable, List, Optional, Tuple

from recon_errors import NumericalError

logger = logging.getLogger(__name__)

FREE, SOURCE_TREE, SINK_TREE = 0, 1, 2
TERMINAL = object()


class DynamicMaxFlow:
    def __init__(self):
        self._res: Dict[Hashable, Dict[Hashable, int]] = {}
        self._cap: Dict[Hashable, Dict[Hashable, int]] = {}
        self._tr: Dict[Hashable, int] = {}
        self._cap_s: Dict[Hashable, int] = {}
        self._cap_t: Dict[Hashable, int] = {}
        # alberi di ricerca persistenti
        self._tree: Dict[Hashable, int] = {}
        self._parent: Dict[Hashable, object] = {}
        self._marked: Dict[Hashable, None] = {}    # nodi toccati dall'ultima soluzione, in ordine
        self.cut_value: int = 0
        self.augmentations = 0
        self.last_touched = 0

    # -------- struttura --------

    def __contains__(self, node) -> bool:
        return node in self._tr

    @property
    def nodes(self) -> List[Hashable]:
        return list(self._tr)

    def add_node(self, node: Hashable) -> None:
        if node not in self._tr:
            self._res[node] = {}
            self._cap[node] = {}
            self._tr[node] = 0
            self._cap_s[node] = 0
            self._cap_t[node] = 0
            self._tree[node] = FREE
            self._parent[node] = None

    def remove_node(self, node: Hashable) -> None:
        """Rimuove un nodo isolato (tutte le capacita' sugli archi a zero)."""
        if node not in self._tr:
            return
        for other, c in self._cap[node].items():
            if c or self._cap[other].get(node, 0):
                raise NumericalError(f"rimozione del nodo {node} con arco {other} ancora attivo")
        for other in list(self._res[node]):
            self._res[other].pop(node, None)
            self._cap[other].pop(node, None)
            self._marked[other] = None
        for table in (self._res, self._cap, self._tr, self._cap_s, self._cap_t, self._tree, self._parent):
            del table[node]
        self._marked.pop(node, None)

    def terminal_capacity(self, node) -> Tuple[int, int]:
        return self._cap_s.get(node, 0), self._cap_t.get(node, 0)

    def edge_capacity(self, u, v) -> int:
        return self._cap.get(u, {}).get(v, 0)

    def tree_of(self, node) -> int:
        """FREE / SOURCE_TREE / SINK_TREE dopo l'ultima soluzione (o modifica)."""
        return self._tree[node]

    # -------- modifiche di capacita' --------

    def add_terminal(self, node, source_delta: int = 0, sink_delta: int = 0) -> None:
        self.add_node(node)
        cs = self._cap_s[node] + source_delta
        ct = self._cap_t[node] + sink_delta
        if cs < 0 or ct < 0:
            raise NumericalError(f"capacita' terminale negativa sul nodo {node}")
        self._cap_s[node] = cs
        self._cap_t[node] = ct
        # il residuo netto assorbe qualsiasi segno (riparametrizzazione implicita)
        self._tr[node] += source_delta - sink_delta
        self._marked[node] = None

    def add_edge(self, u, v, delta: int) -> None:
        """Variazione di capacita' dell'arco orientato u -> v."""
        if u == v:
            raise NumericalError("arco su se stesso")
        self.add_node(u)
        self.add_node(v)
        cap = self._cap[u].get(v, 0) + delta
        if cap < 0:
            raise NumericalError(f"capacita' negativa sull'arco {u}->{v}")
        self._cap[u][v] = cap
        self._cap[v].setdefault(u, 0)
        r_uv = self._res[u].get(v, 0) + delta
        r_vu = self._res[v].get(u, 0)
        if r_uv < 0:
            excess = -r_uv
            r_uv = 0
            r_vu -= excess
            self._tr[u] += excess
            self._tr[v] -= excess
        self._res[u][v] = r_uv
        self._res[v][u] = r_vu
        self._marked[u] = None
        self._marked[v] = None

    # -------- soluzione --------

    def solve(self) -> Dict[Hashable, bool]:
        """
        Completa il max-flow sul residuo corrente. Ritorna per ogni nodo True
        se sta dal lato pozzo (inside). Aggiorna cut_value.
        """
        tree, parent = self._tree, self._parent
        active: deque = deque()
        orphans = self._repair(active)
        self._adopt(orphans, tree, parent, active)

        while active:
            p = active[0]
            if tree[p] == FREE:
                active.popleft()
                continue
            path = self._grow(p, tree, parent, active)
            if path is None:
                active.popleft()
                continue
            orphans = self._augment(path, parent)
            self._adopt(orphans, tree, parent, active)

        labels = {node: tree[node] == SINK_TREE for node in self._tr}
        self.cut_value = self.cut_value_of(labels)
        return labels

    def _repair(self, active: deque) -> List[Hashable]:
        """
        Riallinea gli alberi ai nodi segnati: un residuo terminale di segno
        opposto all'albero sposta il nodo nell'altro albero (i figli diventano
        orfani), un residuo terminale nullo o un arco verso il padre esaurito
        rendono orfano il nodo. Tutti i nodi segnati in un albero tornano attivi.
        """
        tree, parent = self._tree, self._parent
        orphans: List[Hashable] = []
        marked = [x for x in self._marked if x in self._tr]
        self._marked = {}
        self.last_touched = len(marked)
        for x in marked:
            t = self._tr[x]
            side = SOURCE_TREE if t > 0 else SINK_TREE if t < 0 else FREE
            if side != FREE:
                if tree[x] != side:
                    self._orphan_children(x, orphans)
                    tree[x] = side
                parent[x] = TERMINAL
            elif parent[x] is TERMINAL:
                parent[x] = None
                orphans.append(x)
            elif parent[x] is not None and not self._parent_edge_ok(x):
                parent[x] = None
                orphans.append(x)
        for x in marked:
            if tree[x] != FREE:
                active.append(x)
        return orphans

    def _parent_edge_ok(self, x) -> bool:
        up = self._parent[x]
        if up not in self._tr:
            return False
        if self._tree[up] != self._tree[x]:
            return False
        if self._tree[x] == SOURCE_TREE:
            return self._res[up].get(x, 0) > 0
        return self._res[x].get(up, 0) > 0

    def _orphan_children(self, x, orphans: List[Hashable]) -> None:
        for y in self._res[x]:
            if self._parent[y] == x:
                self._parent[y] = None
                orphans.append(y)

    def _grow(self, p, tree, parent, active) -> Optional[Tuple[Hashable, Hashable]]:
        if tree[p] == SOURCE_TREE:
            for q, r in self._res[p].items():
                if r <= 0:
                    continue
                if tree[q] == FREE:
                    tree[q] = SOURCE_TREE
                    parent[q] = p
                    active.append(q)
                elif tree[q] == SINK_TREE:
                    return p, q
        else:
            for q in self._res[p]:
                if self._res[q].get(p, 0) <= 0:
                    continue
                if tree[q] == FREE:
                    tree[q] = SINK_TREE
                    parent[q] = p
                    active.append(q)
                elif tree[q] == SOURCE_TREE:
                    return q, p
        return None

    def _augment(self, bridge, parent) -> List[Hashable]:
        s_side, t_side = bridge
        bottleneck = self._res[s_side][t_side]
        node = s_side
        while parent[node] is not TERMINAL:
            up = parent[node]
            bottleneck = min(bottleneck, self._res[up][node])
            node = up
        bottleneck = min(bottleneck, self._tr[node])
        node = t_side
        while parent[node] is not TERMINAL:
            up = parent[node]
            bottleneck = min(bottleneck, self._res[node][up])
            node = up
        bottleneck = min(bottleneck, -self._tr[node])
        if bottleneck <= 0:
            raise NumericalError("cammino aumentante con capacita' nulla")

        orphans: List[Hashable] = []
        self._res[s_side][t_side] -= bottleneck
        self._res[t_side][s_side] += bottleneck
        node = s_side
        while parent[node] is not TERMINAL:
            up = parent[node]
            self._res[up][node] -= bottleneck
            self._res[node][up] += bottleneck
            if self._res[up][node] == 0:
                parent[node] = None
                orphans.append(node)
            node = up
        self._tr[node] -= bottleneck
        if self._tr[node] == 0:
            parent[node] = None
            orphans.append(node)
        node = t_side
        while parent[node] is not TERMINAL:
            up = parent[node]
            self._res[node][up] -= bottleneck
            self._res[up][node] += bottleneck
            if self._res[node][up] == 0:
                parent[node] = None
                orphans.append(node)
            node = up
        self._tr[node] += bottleneck
        if self._tr[node] == 0:
            parent[node] = None
            orphans.append(node)
        self.augmentations += 1
        return orphans

    def _rooted(self, node, parent) -> bool:
        while True:
            up = parent[node]
            if up is TERMINAL:
                return True
            if up is None:
                return False
            node = up

    def _adopt(self, orphans, tree, parent, active) -> None:
        queue = deque(orphans)
        while queue:
            x = queue.popleft()
            if parent[x] is not None:
                continue
            side = tree[x]
            if side == SOURCE_TREE and self._tr[x] > 0 or side == SINK_TREE and self._tr[x] < 0:
                parent[x] = TERMINAL
                continue
            new_parent = None
            for y in self._res[x]:
                if tree[y] != side:
                    continue
                r = self._res[y][x] if side == SOURCE_TREE else self._res[x][y]
                if r > 0 and self._rooted(y, parent):
                    new_parent = y
                    break
            if new_parent is not None:
                parent[x] = new_parent
                continue
            for y in self._res[x]:
                if tree[y] != side:
                    continue
                r = self._res[y][x] if side == SOURCE_TREE else self._res[x][y]
                if r > 0:
                    active.append(y)
                if parent[y] == x:
                    parent[y] = None
                    queue.append(y)
            tree[x] = FREE

    # -------- valore del taglio --------

    def cut_value_of(self, labels: Dict[Hashable, bool]) -> int:
        """Costo del taglio sulle capacita' originali (True = lato pozzo)."""
        total = 0
        for node in self._tr:
            inside = labels.get(node, False)
            total += self._cap_s[node] if inside else self._cap_t[node]
            if inside:
                continue
            for other, c in self._cap[node].items():
                if c and labels.get(other, False):
                    total += c
        return total


def min_cut_from_scratch(nodes: Iterable[Hashable], terminals: Dict[Hashable, Tuple[int, int]],
                         edges: Dict[Tuple[Hashable, Hashable], int]) -> Tuple[Dict[Hashable, bool], int]:
    """Soluzione da zero su un solver nuovo: etichette e valore del taglio."""
    solver = DynamicMaxFlow()
    for node in nodes:
        solver.add_node(node)
    for node, (cs, ct) in terminals.items():
        solver.add_terminal(node, cs, ct)
    for (u, v), c in edges.items():
        solver.add_edge(u, v, c)
    labels = solver.solve()
    return labels, solver.cut_value
