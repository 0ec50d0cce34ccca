"""Single-period loss minimisation on a feeder file, solved as a PSD relaxation
and as the 2x2-minor cone relaxation, for comparing the two bounds.

usage: relaxation_tightness.py FEEDER [--load-scale K] [--mode sdp|soc] [--v-slack V] [--v-min V]
"""
import argparse

import cvxpy as cp
import numpy as np

ap = argparse.ArgumentParser()
ap.add_argument("feeder")
ap.add_argument("--load-scale", type=float, default=1.0)
ap.add_argument("--mode", choices=["sdp", "soc"], default="sdp")
ap.add_argument("--v-slack", type=float, default=1.0)
ap.add_argument("--v-min", type=float, default=0.9)
args = ap.parse_args()
k = args.load_scale
mode = args.mode
txt = open(args.feeder).read().splitlines()
sec=None; nodes={}; order=[]; branches=[]; loads={}; vb=2400; sb=1e6
def cpx(t):
    t=t.strip()
    return complex(t) if t.endswith('j') else complex(float(t), 0)
for line in txt:
    line=line.split('#')[0].strip()
    if not line: continue
    if line.startswith('['): sec=line[1:-1]; continue
    if sec=='nodes':
        tk=line.split(); nodes[tk[0]]=[ 'abc'.index(c) for c in tk[1]]; order.append(tk[0]);
        if len(tk)==5: slack=tk[0]
    elif sec=='branches':
        head,body=line.split('|'); h=head.split(); L=float(h[4]); unit=h[5]
        sc = L if unit=='pu' else L/(vb*vb/sb)
        Z=np.array([[cpx(e) for e in r.split()] for r in body.split(';')])*sc
        branches.append((h[0],h[1],[ 'abc'.index(c) for c in h[2]],Z))
    elif sec=='loads':
        tk=line.split(); s=complex(float(tk[2]),float(tk[3]))*1e3/sb
        loads[(tk[0],'abc'.index(tk[1]))]=loads.get((tk[0],'abc'.index(tk[1])),0)+s*k
a=np.exp(-2j*np.pi/3); vs=args.v_slack; vlo=args.v_min; v0=vs*np.array([1,a,a*a])
W={}; cons=[]
for n in order:
    ph=nodes[n]
    if n==slack: W[n]=np.outer(v0[ph],v0[ph].conj())
    else:
        W[n]=cp.Variable((len(ph),len(ph)),hermitian=True)
        cons += [cp.real(cp.diag(W[n]))>=vlo**2, cp.real(cp.diag(W[n]))<=1.1**2]
obj=0; parent={}; children={n:[] for n in order}
S={}; I={}
for (f,t,ph,Z) in branches:
    Zs=Z[np.ix_(ph,ph)]; m=len(ph)
    Sv=cp.Variable((m,m),complex=True); Iv=cp.Variable((m,m),hermitian=True)
    S[(f,t)]=Sv; I[(f,t)]=Iv; parent[t]=(f,t,ph,Zs); children[f].append((f,t,ph))
    fi=[nodes[f].index(p) for p in ph]; ti=[nodes[t].index(p) for p in ph]
    Wf=W[f][np.ix_(fi,fi)] if isinstance(W[f],np.ndarray) else W[f][fi][:,fi]
    Wt=W[t][np.ix_(ti,ti)] if isinstance(W[t],np.ndarray) else W[t][ti][:,ti]
    cons.append(Wf - Wt - (Sv@Zs.conj().T + Zs@Sv.H) + Zs@Iv@Zs.conj().T == 0)
    if mode=='sdp':
        M=cp.bmat([[Wf,Sv],[Sv.H,Iv]])
        cons.append(M>>0)
    else:
        def wd(i): return cp.real(Wf[i,i])
        for i in range(m):
            for j in range(m):
                cons.append(cp.norm(cp.hstack([2*cp.real(Sv[i,j]),2*cp.imag(Sv[i,j]),wd(i)-cp.real(Iv[j,j])]))<=wd(i)+cp.real(Iv[j,j]))
        for i in range(m):
            for j in range(i+1,m):
                cons.append(cp.norm(cp.hstack([2*cp.real(Iv[i,j]),2*cp.imag(Iv[i,j]),cp.real(Iv[i,i])-cp.real(Iv[j,j])]))<=cp.real(Iv[i,i])+cp.real(Iv[j,j]))
    obj += sum(Zs[i,i].real*cp.real(Iv[i,i]) for i in range(m))
if mode!='sdp':
    for n in order:
        if n==slack: continue
        m=len(nodes[n])
        for i in range(m):
            for j in range(i+1,m):
                cons.append(cp.norm(cp.hstack([2*cp.real(W[n][i,j]),2*cp.imag(W[n][i,j]),cp.real(W[n][i,i])-cp.real(W[n][j,j])]))<=cp.real(W[n][i,i])+cp.real(W[n][j,j]))
for n in order:
    if n==slack: continue
    f,t,ph,Zs=parent[n]; Sv=S[(f,t)]; Iv=I[(f,t)]
    for idx,p in enumerate(nodes[n]):
        bi=ph.index(p)
        e = Sv[bi,bi] - (Zs@Iv)[bi,bi]
        for (ff,tt,cph) in children[n]:
            if p in cph: e = e - S[(ff,tt)][cph.index(p),cph.index(p)]
        cons.append(e - loads.get((n,p),0) == 0)
prob=cp.Problem(cp.Minimize(obj),cons)
prob.solve(solver=cp.CLARABEL)
print(mode, k, prob.status, prob.value)
